/* C interface for the gapalign trainer.
 *
 * Conventions:
 *   - Opaque handles are created by ga_*_load/synth/new/train and released
 *     with the matching ga_*_free; freeing NULL is a no-op.
 *   - Fallible calls return GaStatus; on failure ga_last_error_message()
 *     returns a thread-local NUL-terminated description, valid until the
 *     next failing call on the same thread.
 *   - Matrices are row-major double buffers with explicit dimensions.
 *
 * Kept in sync with crates/gapalign-ffi/src/lib.rs (see cbindgen.toml for
 * regeneration settings).
 */

#ifndef GAPALIGN_H
#define GAPALIGN_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum GaStatus {
  GA_STATUS_OK = 0,
  GA_STATUS_NULL_POINTER = 1,
  GA_STATUS_INVALID_ARGUMENT = 2,
  GA_STATUS_DATA_ERROR = 3,
  GA_STATUS_TRAIN_ERROR = 4,
  GA_STATUS_DEGENERATE_BASELINE = 5,
  GA_STATUS_SHAPE_ERROR = 6,
  GA_STATUS_INTERNAL_ERROR = 7,
} GaStatus;

typedef enum GaCurveField {
  GA_CURVE_FIELD_LOSS = 0,
  GA_CURVE_FIELD_VAL_ACCURACY = 1,
  GA_CURVE_FIELD_SIM_OVERALL = 2,
  GA_CURVE_FIELD_SIM_POS = 3,
  GA_CURVE_FIELD_SIM_NEG = 4,
  GA_CURVE_FIELD_GAP = 5,
  GA_CURVE_FIELD_VAR_MEAN = 6,
  GA_CURVE_FIELD_DELTA = 7,
  GA_CURVE_FIELD_RHO = 8,
} GaCurveField;

typedef enum GaEvalMode {
  GA_EVAL_MODE_ZERO_SHOT = 0,
  GA_EVAL_MODE_FUSED = 1,
} GaEvalMode;

/* Opaque handles. */
typedef struct GaGraph GaGraph;
typedef struct GaRun GaRun;
typedef struct GaMonitor GaMonitor;

/* Training options; fill with ga_train_options_default then override.
 * shots < 0 requests the zero-shot protocol (no alignment training). */
typedef struct GaTrainOptions {
  double lr;
  size_t epochs;
  size_t batch;
  double tau;
  double theta;
  double ema_decay;
  double weight_decay;
  double val_frac;
  size_t d_hidden;
  uint64_t seed;
  int64_t shots;
  bool monitor_enabled;
  bool degree_weighted;
} GaTrainOptions;

/* One-shot gap measurements; var_mean is NaN when no class has members. */
typedef struct GaGapReport {
  double sim_overall;
  double sim_pos;
  double sim_neg;
  double gap;
  double var_mean;
} GaGapReport;

const char *ga_last_error_message(void);
const char *ga_version(void);

/* Datasets. ga_graph_synth with dim = 0 uses the default embedding width. */
GaStatus ga_graph_load(const char *dir, GaGraph **out);
GaStatus ga_graph_synth(size_t classes, size_t per_class, double p_intra,
                        double p_inter, double noise, double separation,
                        size_t dim, uint64_t seed, GaGraph **out);
GaStatus ga_graph_save(const GaGraph *graph, const char *dir);
void ga_graph_free(GaGraph *graph);
size_t ga_graph_n_nodes(const GaGraph *graph);
size_t ga_graph_n_classes(const GaGraph *graph);
size_t ga_graph_dim(const GaGraph *graph);
size_t ga_graph_n_edges(const GaGraph *graph);

/* Training. */
GaStatus ga_train_options_default(GaTrainOptions *out);
GaStatus ga_train(const GaGraph *graph, const GaTrainOptions *opts,
                  GaRun **out);
void ga_run_free(GaRun *run);
size_t ga_run_epochs(const GaRun *run);
int64_t ga_run_stopped_epoch(const GaRun *run);
GaStatus ga_run_curve(const GaRun *run, GaCurveField field, double *buf,
                      size_t len);
GaStatus ga_run_save(const GaRun *run, const char *dir);

/* Evaluation. Fused mode trains the graph-space probe on the training split
 * and requires shots >= 1. */
GaStatus ga_evaluate(const GaGraph *graph, const GaRun *run, int64_t shots,
                     double val_frac, uint64_t seed, GaEvalMode mode,
                     double lambda, size_t probe_iters, double probe_lr,
                     double *out_accuracy);

/* Gap metrics over raw buffers: h is n*d doubles, t is c*d doubles, y is n
 * labels in [0, c). */
GaStatus ga_gap_report(const double *h, size_t n, size_t d, const double *t,
                       size_t c, const uint32_t *y, GaGapReport *out);

/* Early-stopping monitor. Baseline must be positive (and above 1e-9) for the
 * relative-change rule to be well defined. */
GaStatus ga_monitor_new(double theta, double ema_decay, GaMonitor **out);
GaStatus ga_monitor_set_baseline(GaMonitor *monitor, double baseline);
GaStatus ga_monitor_should_stop(GaMonitor *monitor, double sim_neg,
                                bool *out_stop);
int64_t ga_monitor_stopped_epoch(const GaMonitor *monitor);
void ga_monitor_free(GaMonitor *monitor);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GAPALIGN_H */
