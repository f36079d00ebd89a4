//! C ABI for the gapalign trainer.
//!
//! Conventions:
//! - Opaque handles (`GaGraph`, `GaRun`, `GaMonitor`) are created by `ga_*_new`
//!   style constructors and released with the matching `ga_*_free`; freeing a
//!   null pointer is a no-op.
//! - Every fallible call returns a [`GaStatus`]; on failure,
//!   [`ga_last_error_message`] returns a thread-local, NUL-terminated
//!   description valid until the next failing call on the same thread.
//! - Matrices cross the boundary as row-major `f64` buffers with explicit
//!   dimensions; labels as `u32`.
//!
//! The matching header lives at `include/gapalign.h`.

use gapalign::dualspace::{self, EvalMode, FusionModel, GraphClassifier};
use gapalign::encoder;
use gapalign::gapmetrics;
use gapalign::graphdata::{self, SbmConfig, TagGraph};
use gapalign::linalg::Mat;
use gapalign::monitor::MonitorState;
use gapalign::trainer::{self, RunArtifacts, Schedule, TrainConfig};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    TrainError = 4,
    DegenerateBaseline = 5,
    ShapeError = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: GaStatus, msg: &str) -> GaStatus {
    set_error(msg);
    status
}

/// Returns the last error message recorded on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ga_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn ga_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn guard<F: FnOnce() -> GaStatus>(f: F) -> GaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(GaStatus::InternalError, "internal panic"),
    }
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, GaStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(GaStatus::NullPointer);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(GaStatus::InvalidArgument)
        }
    }
}

// ---------------------------------------------------------------------------
// graphs
// ---------------------------------------------------------------------------

/// Opaque text-attributed graph handle.
pub struct GaGraph(TagGraph);

/// Loads a dataset directory (edges.tsv, features.csv, labels.csv,
/// text_protos.csv, meta.json).
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_load(dir: *const c_char, out: *mut *mut GaGraph) -> GaStatus {
    guard(|| {
        if out.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        let path = match unsafe { path_from(dir) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match graphdata::load_graph(&path) {
            Ok(g) => {
                unsafe { *out = Box::into_raw(Box::new(GaGraph(g))) };
                GaStatus::Ok
            }
            Err(e) => fail(GaStatus::DataError, &e.to_string()),
        }
    })
}

/// Generates a stochastic-block-model dataset. `dim = 0` selects the default
/// embedding dimension (one axis per class).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_synth(
    classes: usize,
    per_class: usize,
    p_intra: f64,
    p_inter: f64,
    noise: f64,
    separation: f64,
    dim: usize,
    seed: u64,
    out: *mut *mut GaGraph,
) -> GaStatus {
    guard(|| {
        if out.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        let cfg = SbmConfig {
            nodes_per_class: per_class,
            n_classes: classes,
            p_intra,
            p_inter,
            feature_noise: noise,
            proto_separation: separation,
            dim: if dim == 0 { None } else { Some(dim) },
            seed,
        };
        match graphdata::synth_sbm(&cfg) {
            Ok(g) => {
                unsafe { *out = Box::into_raw(Box::new(GaGraph(g))) };
                GaStatus::Ok
            }
            Err(e) => fail(GaStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Writes the five dataset files into `dir`.
///
/// # Safety
/// `graph` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_save(graph: *const GaGraph, dir: *const c_char) -> GaStatus {
    guard(|| {
        let Some(g) = (unsafe { graph.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null graph");
        };
        let path = match unsafe { path_from(dir) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match graphdata::save_graph(&g.0, &path) {
            Ok(()) => GaStatus::Ok,
            Err(e) => fail(GaStatus::DataError, &e.to_string()),
        }
    })
}

/// # Safety
/// `graph` must be a pointer previously returned by this library (or null).
#[no_mangle]
pub unsafe extern "C" fn ga_graph_free(graph: *mut GaGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_n_nodes(graph: *const GaGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.0.n_nodes)
}

/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_n_classes(graph: *const GaGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.0.n_classes)
}

/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_dim(graph: *const GaGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.0.dim)
}

/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_graph_n_edges(graph: *const GaGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.0.edges.len())
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

/// Plain-value training options. Get defaults from
/// [`ga_train_options_default`], then override fields as needed.
/// `shots < 0` requests the zero-shot protocol (empty training split).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GaTrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub tau: f64,
    pub theta: f64,
    pub ema_decay: f64,
    pub weight_decay: f64,
    pub val_frac: f64,
    pub d_hidden: usize,
    pub seed: u64,
    pub shots: i64,
    pub monitor_enabled: bool,
    pub degree_weighted: bool,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_train_options_default(out: *mut GaTrainOptions) -> GaStatus {
    guard(|| {
        if out.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        let d = TrainConfig::default();
        unsafe {
            *out = GaTrainOptions {
                lr: d.lr,
                epochs: d.epochs,
                batch: d.batch,
                tau: d.tau,
                theta: d.theta,
                ema_decay: d.ema_decay,
                weight_decay: d.weight_decay,
                val_frac: 0.2,
                d_hidden: d.d_hidden,
                seed: d.seed,
                shots: 1,
                monitor_enabled: d.monitor_enabled,
                degree_weighted: d.degree_weighted,
            };
        }
        GaStatus::Ok
    })
}

/// Opaque finished-run handle: final encoder weights plus per-epoch curves.
pub struct GaRun {
    artifacts: RunArtifacts,
}

fn train_config(opts: &GaTrainOptions) -> TrainConfig {
    TrainConfig {
        lr: opts.lr,
        epochs: opts.epochs,
        batch: opts.batch,
        tau: opts.tau,
        theta: opts.theta,
        ema_decay: opts.ema_decay,
        monitor_enabled: opts.monitor_enabled,
        seed: opts.seed,
        schedule: Schedule::Cosine,
        d_hidden: opts.d_hidden,
        degree_weighted: opts.degree_weighted,
        weight_decay: opts.weight_decay,
    }
}

/// Runs alignment training and returns a run handle.
///
/// # Safety
/// `graph` and `opts` must be live pointers; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ga_train(
    graph: *const GaGraph,
    opts: *const GaTrainOptions,
    out: *mut *mut GaRun,
) -> GaStatus {
    guard(|| {
        let Some(g) = (unsafe { graph.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null graph");
        };
        let Some(o) = (unsafe { opts.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null options");
        };
        if out.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        let shots = if o.shots < 0 { None } else { Some(o.shots as usize) };
        let split = match graphdata::make_split(&g.0, shots, o.val_frac, o.seed) {
            Ok(s) => s,
            Err(e) => return fail(GaStatus::InvalidArgument, &e.to_string()),
        };
        match trainer::run_training(&g.0, &split, &train_config(o)) {
            Ok(artifacts) => {
                unsafe { *out = Box::into_raw(Box::new(GaRun { artifacts })) };
                GaStatus::Ok
            }
            Err(trainer::TrainError::Monitor(
                gapalign::monitor::MonitorError::DegenerateBaseline(b),
            )) => fail(
                GaStatus::DegenerateBaseline,
                &format!("degenerate monitor baseline {b}"),
            ),
            Err(e) => fail(GaStatus::TrainError, &e.to_string()),
        }
    })
}

/// # Safety
/// `run` must be a pointer previously returned by this library (or null).
#[no_mangle]
pub unsafe extern "C" fn ga_run_free(run: *mut GaRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Number of completed epochs (rows in the curves).
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_run_epochs(run: *const GaRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.artifacts.curves.len())
}

/// Epoch at which the monitor stopped training, or -1 if it never fired.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_run_stopped_epoch(run: *const GaRun) -> i64 {
    unsafe { run.as_ref() }
        .and_then(|r| r.artifacts.stopped_at)
        .map_or(-1, |e| e as i64)
}

/// Per-epoch curve fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaCurveField {
    Loss = 0,
    ValAccuracy = 1,
    SimOverall = 2,
    SimPos = 3,
    SimNeg = 4,
    Gap = 5,
    VarMean = 6,
    Delta = 7,
    Rho = 8,
}

/// Copies one curve into `buf` (length `len >= ga_run_epochs`). Absent values
/// (rho at epoch 0, delta without a monitor) come back as NaN.
///
/// # Safety
/// `buf` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ga_run_curve(
    run: *const GaRun,
    field: GaCurveField,
    buf: *mut f64,
    len: usize,
) -> GaStatus {
    guard(|| {
        let Some(r) = (unsafe { run.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null run");
        };
        if buf.is_null() {
            return fail(GaStatus::NullPointer, "null buffer");
        }
        let rows = &r.artifacts.curves;
        if len < rows.len() {
            return fail(
                GaStatus::ShapeError,
                &format!("buffer holds {len} values, need {}", rows.len()),
            );
        }
        let dest = unsafe { std::slice::from_raw_parts_mut(buf, rows.len()) };
        for (d, row) in dest.iter_mut().zip(rows) {
            *d = match field {
                GaCurveField::Loss => row.loss,
                GaCurveField::ValAccuracy => row.val_acc,
                GaCurveField::SimOverall => row.report.sim_overall,
                GaCurveField::SimPos => row.report.sim_pos,
                GaCurveField::SimNeg => row.report.sim_neg,
                GaCurveField::Gap => row.report.gap,
                GaCurveField::VarMean => row.report.var_mean().unwrap_or(f64::NAN),
                GaCurveField::Delta => row.delta.unwrap_or(f64::NAN),
                GaCurveField::Rho => row.rho.unwrap_or(f64::NAN),
            };
        }
        GaStatus::Ok
    })
}

/// Writes curves.csv, curves.jsonl, and params.json into `dir`.
///
/// # Safety
/// `run` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ga_run_save(run: *const GaRun, dir: *const c_char) -> GaStatus {
    guard(|| {
        let Some(r) = (unsafe { run.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null run");
        };
        let path = match unsafe { path_from(dir) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        if let Err(e) = std::fs::create_dir_all(&path) {
            return fail(GaStatus::DataError, &e.to_string());
        }
        let csv = trainer::curves_to_csv(&r.artifacts.curves);
        let jsonl = trainer::curves_to_jsonl(&r.artifacts.curves);
        if let Err(e) = std::fs::write(path.join("curves.csv"), csv)
            .and_then(|()| std::fs::write(path.join("curves.jsonl"), jsonl))
        {
            return fail(GaStatus::DataError, &e.to_string());
        }
        match encoder::save_params(&r.artifacts.final_params, &path.join("params.json")) {
            Ok(()) => GaStatus::Ok,
            Err(e) => fail(GaStatus::DataError, &e.to_string()),
        }
    })
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaEvalMode {
    ZeroShot = 0,
    Fused = 1,
}

/// Evaluates a finished run on the held-out test split of `graph`.
/// Fused mode trains the graph-space probe on the training split first, so it
/// requires `shots >= 1`.
///
/// # Safety
/// All handles must be live; `out_accuracy` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_evaluate(
    graph: *const GaGraph,
    run: *const GaRun,
    shots: i64,
    val_frac: f64,
    seed: u64,
    mode: GaEvalMode,
    lambda: f64,
    probe_iters: usize,
    probe_lr: f64,
    out_accuracy: *mut f64,
) -> GaStatus {
    guard(|| {
        let Some(g) = (unsafe { graph.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null graph");
        };
        let Some(r) = (unsafe { run.as_ref() }) else {
            return fail(GaStatus::NullPointer, "null run");
        };
        if out_accuracy.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        let shots_opt = if shots < 0 { None } else { Some(shots as usize) };
        let split = match graphdata::make_split(&g.0, shots_opt, val_frac, seed) {
            Ok(s) => s,
            Err(e) => return fail(GaStatus::InvalidArgument, &e.to_string()),
        };
        let adj = encoder::normalize_adjacency(&g.0);
        let h = match encoder::encode(&r.artifacts.final_params, &adj, &g.0.features) {
            Ok(h) => h,
            Err(e) => return fail(GaStatus::ShapeError, &e.to_string()),
        };
        let select = |ids: &[usize]| -> (Mat, Vec<usize>) {
            let mut m = Mat::zeros((ids.len(), h.ncols()));
            for (row, &i) in ids.iter().enumerate() {
                for k in 0..h.ncols() {
                    m[[row, k]] = h[[i, k]];
                }
            }
            (m, ids.iter().map(|&i| g.0.labels[i]).collect())
        };
        let (h_test, y_test) = select(&split.test_ids);
        let classifier = match mode {
            GaEvalMode::ZeroShot => GraphClassifier::zeros(g.0.dim, g.0.n_classes),
            GaEvalMode::Fused => {
                let (h_train, y_train) = select(&split.train_ids);
                match dualspace::train_graph_classifier(
                    &h_train,
                    &y_train,
                    g.0.n_classes,
                    probe_iters,
                    probe_lr,
                ) {
                    Ok(c) => c,
                    Err(e) => return fail(GaStatus::TrainError, &e.to_string()),
                }
            }
        };
        let model = FusionModel {
            text_protos: g.0.text_protos.clone(),
            classifier,
            lambda,
        };
        let eval_mode = match mode {
            GaEvalMode::ZeroShot => EvalMode::ZeroShot,
            GaEvalMode::Fused => EvalMode::Fused,
        };
        match dualspace::evaluate(&model, &h_test, &y_test, eval_mode) {
            Ok(eval) => {
                unsafe { *out_accuracy = eval.accuracy };
                GaStatus::Ok
            }
            Err(e) => fail(GaStatus::TrainError, &e.to_string()),
        }
    })
}

// ---------------------------------------------------------------------------
// gap metrics
// ---------------------------------------------------------------------------

/// One-shot gap measurements over row-major embeddings and prototypes.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GaGapReport {
    pub sim_overall: f64,
    pub sim_pos: f64,
    pub sim_neg: f64,
    pub gap: f64,
    /// Mean per-class variance; NaN when no class has members.
    pub var_mean: f64,
}

/// Computes the gap report for `n x d` embeddings against `c x d` prototypes.
///
/// # Safety
/// `h` must hold `n*d` doubles, `t` `c*d` doubles, `y` `n` labels; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_gap_report(
    h: *const f64,
    n: usize,
    d: usize,
    t: *const f64,
    c: usize,
    y: *const u32,
    out: *mut GaGapReport,
) -> GaStatus {
    guard(|| {
        if h.is_null() || t.is_null() || y.is_null() || out.is_null() {
            return fail(GaStatus::NullPointer, "null argument");
        }
        let h_slice = unsafe { std::slice::from_raw_parts(h, n * d) };
        let t_slice = unsafe { std::slice::from_raw_parts(t, c * d) };
        let y_slice = unsafe { std::slice::from_raw_parts(y, n) };
        let h_mat = match Mat::from_shape_vec((n, d), h_slice.to_vec()) {
            Ok(m) => m,
            Err(e) => return fail(GaStatus::ShapeError, &e.to_string()),
        };
        let t_mat = match Mat::from_shape_vec((c, d), t_slice.to_vec()) {
            Ok(m) => m,
            Err(e) => return fail(GaStatus::ShapeError, &e.to_string()),
        };
        let labels: Vec<usize> = y_slice.iter().map(|&v| v as usize).collect();
        match gapmetrics::gap_report(&h_mat, &t_mat, &labels, None) {
            Ok(rep) => {
                unsafe {
                    *out = GaGapReport {
                        sim_overall: rep.sim_overall,
                        sim_pos: rep.sim_pos,
                        sim_neg: rep.sim_neg,
                        gap: rep.gap,
                        var_mean: rep.var_mean().unwrap_or(f64::NAN),
                    };
                }
                GaStatus::Ok
            }
            Err(e) => fail(GaStatus::ShapeError, &e.to_string()),
        }
    })
}

// ---------------------------------------------------------------------------
// monitor
// ---------------------------------------------------------------------------

/// Opaque early-stopping monitor handle.
pub struct GaMonitor(MonitorState);

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_monitor_new(
    theta: f64,
    ema_decay: f64,
    out: *mut *mut GaMonitor,
) -> GaStatus {
    guard(|| {
        if out.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        if !(ema_decay > 0.0 && ema_decay < 1.0) {
            return fail(GaStatus::InvalidArgument, "ema_decay must be in (0,1)");
        }
        match MonitorState::new(theta, ema_decay) {
            Ok(m) => {
                unsafe { *out = Box::into_raw(Box::new(GaMonitor(m))) };
                GaStatus::Ok
            }
            Err(e) => fail(GaStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// # Safety
/// `monitor` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ga_monitor_set_baseline(
    monitor: *mut GaMonitor,
    baseline: f64,
) -> GaStatus {
    guard(|| {
        let Some(m) = (unsafe { monitor.as_mut() }) else {
            return fail(GaStatus::NullPointer, "null monitor");
        };
        match m.0.set_baseline(baseline) {
            Ok(()) => GaStatus::Ok,
            Err(e) => fail(GaStatus::DegenerateBaseline, &e.to_string()),
        }
    })
}

/// Feeds one epoch's negative similarity; writes whether training should stop.
///
/// # Safety
/// `monitor` must be a live handle; `out_stop` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ga_monitor_should_stop(
    monitor: *mut GaMonitor,
    sim_neg: f64,
    out_stop: *mut bool,
) -> GaStatus {
    guard(|| {
        let Some(m) = (unsafe { monitor.as_mut() }) else {
            return fail(GaStatus::NullPointer, "null monitor");
        };
        if out_stop.is_null() {
            return fail(GaStatus::NullPointer, "null out pointer");
        }
        match m.0.should_stop(sim_neg) {
            Ok(stop) => {
                unsafe { *out_stop = stop };
                GaStatus::Ok
            }
            Err(e) => fail(GaStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Epoch index at which the monitor fired, or -1.
///
/// # Safety
/// `monitor` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ga_monitor_stopped_epoch(monitor: *const GaMonitor) -> i64 {
    unsafe { monitor.as_ref() }
        .and_then(|m| m.0.stopped_at())
        .map_or(-1, |e| e as i64)
}

/// # Safety
/// `monitor` must be a pointer previously returned by this library (or null).
#[no_mangle]
pub unsafe extern "C" fn ga_monitor_free(monitor: *mut GaMonitor) {
    if !monitor.is_null() {
        drop(unsafe { Box::from_raw(monitor) });
    }
}
