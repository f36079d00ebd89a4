//! Graph-space compensating classifier and dual-space fused prediction.
//!
//! Prototype-only classification is limited to the directions the prototypes
//! span. A linear probe trained on frozen encoder outputs recovers the
//! discriminative directions the prototypes miss; fused prediction adds the
//! lambda-weighted probe logits to the cosine logits before the softmax.

use crate::encoder;
use crate::gapmetrics;
use crate::graphdata::{make_split, TagGraph};
use crate::linalg::{self, Mat};
use crate::objectives;
use crate::trainer::{self, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("empty training set: the probe needs labeled nodes")]
    EmptyTrainSet,
    #[error("single-class training set: classifier would be degenerate")]
    SingleClass,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least 2 seeds for a std, got {0}")]
    TooFewSeeds(usize),
    #[error(transparent)]
    Loss(#[from] objectives::LossError),
    #[error("training failed: {0}")]
    Train(String),
}

/// Linear probe in graph space: logits = `W^T h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphClassifier {
    /// d x C weight matrix.
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl GraphClassifier {
    pub fn zeros(d: usize, n_classes: usize) -> Self {
        Self {
            weights: Mat::zeros((d, n_classes)),
            bias: vec![0.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, h_row: &[f64]) -> Vec<f64> {
        let d = self.weights.nrows();
        debug_assert_eq!(h_row.len(), d);
        let mut out = self.bias.clone();
        for (k, &hk) in h_row.iter().enumerate() {
            if hk == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += hk * self.weights[[k, j]];
            }
        }
        out
    }

    fn logits_matrix(&self, h: &Mat) -> Mat {
        let (n, c) = (h.nrows(), self.weights.ncols());
        let mut out = Mat::zeros((n, c));
        for i in 0..n {
            let row = self.logits(h.row(i).as_slice().expect("contiguous"));
            for j in 0..c {
                out[[i, j]] = row[j];
            }
        }
        out
    }
}

/// Cross-entropy loss of the probe on `(h, y)` and its gradients with respect
/// to the weights and bias.
pub fn probe_gradient(
    clf: &GraphClassifier,
    h: &Mat,
    y: &[usize],
) -> Result<(f64, Mat, Vec<f64>), ProbeError> {
    if h.nrows() == 0 {
        return Err(ProbeError::EmptyTrainSet);
    }
    if h.ncols() != clf.weights.nrows() {
        return Err(ProbeError::ShapeMismatch(format!(
            "embedding dim {} vs probe dim {}",
            h.ncols(),
            clf.weights.nrows()
        )));
    }
    let logits = clf.logits_matrix(h);
    let (loss, g_logits) = objectives::cross_entropy(&logits, y)?;
    // dL/dW = H^T G, dL/db = column sums of G
    let g_w = linalg::matmul_tn(h, &g_logits);
    let mut g_b = vec![0.0; clf.weights.ncols()];
    for i in 0..g_logits.nrows() {
        for (j, gb) in g_b.iter_mut().enumerate() {
            *gb += g_logits[[i, j]];
        }
    }
    Ok((loss.total, g_w, g_b))
}

/// Trains the graph-space classifier by full-batch gradient descent from a
/// zero initialization. The objective is convex, so plain descent with a
/// fixed step is enough and keeps the result deterministic.
pub fn train_graph_classifier(
    h_train: &Mat,
    y_train: &[usize],
    n_classes: usize,
    iters: usize,
    lr: f64,
) -> Result<GraphClassifier, ProbeError> {
    if h_train.nrows() == 0 {
        return Err(ProbeError::EmptyTrainSet);
    }
    if y_train.len() != h_train.nrows() {
        return Err(ProbeError::ShapeMismatch(format!(
            "{} embeddings for {} labels",
            h_train.nrows(),
            y_train.len()
        )));
    }
    let distinct: std::collections::BTreeSet<usize> = y_train.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(ProbeError::SingleClass);
    }
    let mut clf = GraphClassifier::zeros(h_train.ncols(), n_classes);
    for _ in 0..iters {
        let (_, g_w, g_b) = probe_gradient(&clf, h_train, y_train)?;
        for (w, g) in clf.weights.iter_mut().zip(g_w.iter()) {
            *w -= lr * g;
        }
        for (b, g) in clf.bias.iter_mut().zip(g_b.iter()) {
            *b -= lr * g;
        }
    }
    Ok(clf)
}

/// Frozen prototype matrix plus trained probe and the fusion weight.
///
/// Cosine logits are bounded in [-1, 1] while probe logits are not, so the
/// fused sum is scale-sensitive in `lambda`; callers tune it rather than the
/// model normalizing silently.
#[derive(Debug, Clone)]
pub struct FusionModel {
    pub text_protos: Mat,
    pub classifier: GraphClassifier,
    pub lambda: f64,
}

/// Class probabilities `softmax(cos(h, t_j) + lambda * (W^T h + b)_j)`.
pub fn fuse_predict(model: &FusionModel, h_row: &[f64]) -> Result<Vec<f64>, ProbeError> {
    let logits = fused_logits(model, h_row)?;
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z = linalg::kahan_sum(exps.iter().copied());
    Ok(exps.iter().map(|&e| e / z).collect())
}

fn fused_logits(model: &FusionModel, h_row: &[f64]) -> Result<Vec<f64>, ProbeError> {
    if h_row.len() != model.text_protos.ncols() {
        return Err(ProbeError::ShapeMismatch(format!(
            "embedding dim {} vs prototype dim {}",
            h_row.len(),
            model.text_protos.ncols()
        )));
    }
    let c = model.text_protos.nrows();
    let probe = model.classifier.logits(h_row);
    let mut logits = Vec::with_capacity(c);
    for j in 0..c {
        let cos = gapmetrics::cosine(
            h_row,
            model.text_protos.row(j).as_slice().expect("contiguous"),
        )
        .map_err(|e| ProbeError::ShapeMismatch(e.to_string()))?;
        logits.push(cos + model.lambda * probe[j]);
    }
    Ok(logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    ZeroShot,
    Fused,
}

impl EvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::ZeroShot => "zero_shot",
            EvalMode::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class: Vec<Option<f64>>,
    pub n_test: usize,
}

fn argmax_lowest_tie(v: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_val = v[0];
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > best_val {
            best_val = x;
            best = j;
        }
    }
    best
}

/// Accuracy and per-class accuracy under the chosen mode. Zero-shot mode is
/// argmax cosine only; fused mode is argmax of the fused prediction. Ties
/// break toward the lowest class index.
pub fn evaluate(
    model: &FusionModel,
    h_test: &Mat,
    y_test: &[usize],
    mode: EvalMode,
) -> Result<Evaluation, ProbeError> {
    if h_test.nrows() == 0 {
        return Err(ProbeError::EmptyTestSet);
    }
    if y_test.len() != h_test.nrows() {
        return Err(ProbeError::ShapeMismatch(format!(
            "{} embeddings for {} labels",
            h_test.nrows(),
            y_test.len()
        )));
    }
    let c = model.text_protos.nrows();
    let mut correct = 0usize;
    let mut class_total = vec![0usize; c];
    let mut class_correct = vec![0usize; c];
    for i in 0..h_test.nrows() {
        let h_row = h_test.row(i);
        let h_row = h_row.as_slice().expect("contiguous");
        let pred = match mode {
            EvalMode::ZeroShot => {
                let sims: Vec<f64> = (0..c)
                    .map(|j| {
                        gapmetrics::cosine(
                            h_row,
                            model.text_protos.row(j).as_slice().expect("contiguous"),
                        )
                        .expect("matching dims")
                    })
                    .collect();
                argmax_lowest_tie(&sims)
            }
            EvalMode::Fused => argmax_lowest_tie(&fused_logits(model, h_row)?),
        };
        let y = y_test[i];
        class_total[y] += 1;
        if pred == y {
            correct += 1;
            class_correct[y] += 1;
        }
    }
    let per_class = (0..c)
        .map(|j| {
            if class_total[j] == 0 {
                None
            } else {
                Some(class_correct[j] as f64 / class_total[j] as f64)
            }
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / h_test.nrows() as f64,
        per_class,
        n_test: h_test.nrows(),
    })
}

/// Full experiment configuration for a multi-seed sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub train: TrainConfig,
    pub shots: Option<usize>,
    pub val_frac: f64,
    pub lambda: f64,
    pub probe_iters: usize,
    pub probe_lr: f64,
    pub dataset: String,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub dataset: String,
    pub mode: EvalMode,
    pub seed: u64,
    pub shots: Option<usize>,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub dataset: String,
    pub mode: EvalMode,
    pub shots: Option<usize>,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = linalg::kahan_sum(values.iter().copied()) / n;
    let var = linalg::kahan_sum(values.iter().map(|&v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

/// Runs one full train-probe-evaluate pass per seed and aggregates the
/// accuracies. With shots, the evaluated mode is fused (plus a probe trained
/// on the frozen final encoder); without shots it is zero-shot only.
pub fn multi_seed_eval(
    g: &TagGraph,
    cfg: &SweepConfig,
    seeds: &[u64],
) -> Result<(Vec<SeedResult>, Vec<SummaryRow>), ProbeError> {
    if seeds.len() < 2 {
        return Err(ProbeError::TooFewSeeds(seeds.len()));
    }
    let mut results = Vec::new();
    for &seed in seeds {
        let run = run_one_seed(g, cfg, seed)?;
        results.extend(run);
    }
    let mut summaries = Vec::new();
    for mode in [EvalMode::ZeroShot, EvalMode::Fused] {
        let accs: Vec<f64> = results
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.accuracy)
            .collect();
        if accs.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&accs);
        summaries.push(SummaryRow {
            dataset: cfg.dataset.clone(),
            mode,
            shots: cfg.shots,
            mean,
            std,
            n_seeds: accs.len(),
        });
    }
    Ok((results, summaries))
}

/// One seed's train + evaluate pass; shared by the sweep and the CLI.
pub fn run_one_seed(
    g: &TagGraph,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<Vec<SeedResult>, ProbeError> {
    let split = make_split(g, cfg.shots, cfg.val_frac, seed)
        .map_err(|e| ProbeError::Train(e.to_string()))?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let artifacts = trainer::run_training(g, &split, &train_cfg)
        .map_err(|e| ProbeError::Train(e.to_string()))?;
    let adj = encoder::normalize_adjacency(g);
    let h = encoder::encode(&artifacts.final_params, &adj, &g.features)
        .map_err(|e| ProbeError::Train(e.to_string()))?;

    let select = |ids: &[usize]| -> (Mat, Vec<usize>) {
        let mut m = Mat::zeros((ids.len(), h.ncols()));
        for (r, &i) in ids.iter().enumerate() {
            for k in 0..h.ncols() {
                m[[r, k]] = h[[i, k]];
            }
        }
        (m, ids.iter().map(|&i| g.labels[i]).collect())
    };
    let (h_test, y_test) = select(&split.test_ids);

    let mut out = Vec::new();
    match cfg.shots {
        None => {
            let model = FusionModel {
                text_protos: g.text_protos.clone(),
                classifier: GraphClassifier::zeros(g.dim, g.n_classes),
                lambda: cfg.lambda,
            };
            let eval = evaluate(&model, &h_test, &y_test, EvalMode::ZeroShot)?;
            out.push(SeedResult {
                dataset: cfg.dataset.clone(),
                mode: EvalMode::ZeroShot,
                seed,
                shots: None,
                accuracy: eval.accuracy,
            });
        }
        Some(shots) => {
            let (h_train, y_train) = select(&split.train_ids);
            let clf = train_graph_classifier(
                &h_train,
                &y_train,
                g.n_classes,
                cfg.probe_iters,
                cfg.probe_lr,
            )?;
            let model = FusionModel {
                text_protos: g.text_protos.clone(),
                classifier: clf,
                lambda: cfg.lambda,
            };
            let eval = evaluate(&model, &h_test, &y_test, EvalMode::Fused)?;
            out.push(SeedResult {
                dataset: cfg.dataset.clone(),
                mode: EvalMode::Fused,
                seed,
                shots: Some(shots),
                accuracy: eval.accuracy,
            });
        }
    }
    Ok(out)
}

pub fn results_csv(rows: &[SeedResult]) -> String {
    let mut out = String::from("dataset,mode,seed,shots,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.dataset,
            r.mode.as_str(),
            r.seed,
            r.shots.map_or(String::new(), |s| s.to_string()),
            r.accuracy
        ));
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("dataset,mode,shots,mean,std,n_seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dataset,
            r.mode.as_str(),
            r.shots.map_or(String::new(), |s| s.to_string()),
            r.mean,
            r.std,
            r.n_seeds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        // h = +-e1, two classes
        let h = array![
            [1.0, 0.0],
            [1.0, 0.0],
            [-1.0, 0.0],
            [-1.0, 0.0]
        ];
        let y = [0usize, 0, 1, 1];
        let clf = train_graph_classifier(&h, &y, 2, 200, 0.5).unwrap();
        let mut correct = 0;
        for i in 0..4 {
            let logits = clf.logits(h.row(i).as_slice().unwrap());
            let pred = argmax_lowest_tie(&logits);
            if pred == y[i] {
                correct += 1;
            }
        }
        assert_eq!(correct, 4);
    }

    #[test]
    fn zero_iters_returns_zero_weights() {
        let h = array![[1.0, 0.0], [-1.0, 0.0]];
        let clf = train_graph_classifier(&h, &[0, 1], 2, 0, 0.5).unwrap();
        assert!(clf.weights.iter().all(|&w| w == 0.0));
        assert!(clf.bias.iter().all(|&b| b == 0.0));
        // fused prediction then reduces to cosine-only up to a constant
        let model = FusionModel {
            text_protos: array![[1.0, 0.0], [0.0, 1.0]],
            classifier: clf,
            lambda: 3.7,
        };
        let p = fuse_predict(&model, &[0.6, 0.8]).unwrap();
        let cos_only = FusionModel {
            text_protos: array![[1.0, 0.0], [0.0, 1.0]],
            classifier: GraphClassifier::zeros(2, 2),
            lambda: 0.0,
        };
        let q = fuse_predict(&cos_only, &[0.6, 0.8]).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_training_sets_are_rejected() {
        let h = array![[1.0, 0.0], [0.9, 0.1]];
        assert!(matches!(
            train_graph_classifier(&h, &[0, 0], 2, 10, 0.5),
            Err(ProbeError::SingleClass)
        ));
        let empty = Mat::zeros((0, 2));
        assert!(matches!(
            train_graph_classifier(&empty, &[], 2, 10, 0.5),
            Err(ProbeError::EmptyTrainSet)
        ));
    }

    #[test]
    fn fused_probabilities_hand_example() {
        // cos sims (0.9, 0.1), lambda 0.8, probe logits (0.5, -0.5)
        // -> fused logits (1.3, -0.3) -> softmax (0.8320, 0.1680)
        // h = e1 and unit prototypes, so cos(h, t_j) is t_j's first component
        let h_row = [1.0, 0.0];
        let protos = array![[0.9, (1.0f64 - 0.81).sqrt()], [0.1, (1.0f64 - 0.01).sqrt()]];
        let mut clf = GraphClassifier::zeros(2, 2);
        clf.weights[[0, 0]] = 0.5;
        clf.weights[[0, 1]] = -0.5;
        let model = FusionModel {
            text_protos: protos,
            classifier: clf,
            lambda: 0.8,
        };
        let p = fuse_predict(&model, &h_row).unwrap();
        let e = ((1.3f64).exp(), (-0.3f64).exp());
        let expect0 = e.0 / (e.0 + e.1);
        assert!((p[0] - expect0).abs() < 1e-12);
        assert!((expect0 - 0.8320).abs() < 5e-5);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_equals_cosine_softmax() {
        let protos = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut clf = GraphClassifier::zeros(3, 3);
        clf.weights[[0, 0]] = 5.0;
        clf.bias[1] = -2.0;
        let model = FusionModel {
            text_protos: protos.clone(),
            classifier: clf,
            lambda: 0.0,
        };
        let h_row = [0.4, -0.3, 0.866];
        let p = fuse_predict(&model, &h_row).unwrap();
        // direct cosine softmax
        let cos: Vec<f64> = (0..3)
            .map(|j| {
                gapmetrics::cosine(&h_row, protos.row(j).as_slice().unwrap()).unwrap()
            })
            .collect();
        let m = cos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = cos.iter().map(|&c| (c - m).exp()).sum();
        for j in 0..3 {
            assert!((p[j] - (cos[j] - m).exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_orthonormal_toy_is_perfect() {
        let protos = array![[1.0, 0.0], [0.0, 1.0]];
        let h = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [0usize, 1, 0];
        let model = FusionModel {
            text_protos: protos,
            classifier: GraphClassifier::zeros(2, 2),
            lambda: 0.8,
        };
        for mode in [EvalMode::ZeroShot, EvalMode::Fused] {
            let e = evaluate(&model, &h, &y, mode).unwrap();
            assert_eq!(e.accuracy, 1.0);
        }
    }

    #[test]
    fn identical_prototypes_fall_back_to_class_zero() {
        let protos = array![[0.5, 0.5], [0.5, 0.5]];
        let h = array![[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]];
        let y = [0usize, 1, 1];
        let model = FusionModel {
            text_protos: protos,
            classifier: GraphClassifier::zeros(2, 2),
            lambda: 0.8,
        };
        let e = evaluate(&model, &h, &y, EvalMode::ZeroShot).unwrap();
        // tie everywhere -> always predict class 0 -> accuracy = freq(class 0)
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.per_class[0], Some(1.0));
        assert_eq!(e.per_class[1], Some(0.0));
    }

    #[test]
    fn evaluate_matches_brute_force_argmax() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let c = 3;
        let protos = Mat::from_shape_fn((c, 4), |_| rng.random::<f64>() - 0.5);
        let h = Mat::from_shape_fn((10, 4), |_| rng.random::<f64>() - 0.5);
        let y: Vec<usize> = (0..10).map(|_| rng.random_range(0..c)).collect();
        let mut clf = GraphClassifier::zeros(4, c);
        for w in clf.weights.iter_mut() {
            *w = rng.random::<f64>() - 0.5;
        }
        let model = FusionModel {
            text_protos: protos.clone(),
            classifier: clf.clone(),
            lambda: 0.8,
        };
        let e = evaluate(&model, &h, &y, EvalMode::Fused).unwrap();
        let mut correct = 0;
        for i in 0..10 {
            let h_row: Vec<f64> = (0..4).map(|k| h[[i, k]]).collect();
            let probe = clf.logits(&h_row);
            let mut best = (0usize, f64::NEG_INFINITY);
            for j in 0..c {
                let cos =
                    gapmetrics::cosine(&h_row, protos.row(j).as_slice().unwrap()).unwrap();
                let l = cos + 0.8 * probe[j];
                if l > best.1 {
                    best = (j, l);
                }
            }
            if best.0 == y[i] {
                correct += 1;
            }
        }
        assert_eq!(e.accuracy, correct as f64 / 10.0);
    }

    #[test]
    fn confident_probe_dominates_past_lambda_star() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        let (c, d) = (3usize, 4usize);
        for _ in 0..10 {
            let protos = Mat::from_shape_fn((c, d), |_| rng.random::<f64>() - 0.5);
            let h: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            // probe with a known margin m on a chosen class
            let target = rng.random_range(0..c);
            let margin = 0.5 + rng.random::<f64>();
            let mut clf = GraphClassifier::zeros(d, c);
            for j in 0..c {
                clf.bias[j] = if j == target { margin } else { 0.0 };
            }
            // cosine logits lie in [-1, 1], so lambda > 2/m + 1 suffices
            let lambda = 2.0 / margin + 1.1;
            let model = FusionModel {
                text_protos: protos,
                classifier: clf,
                lambda,
            };
            let p = fuse_predict(&model, &h).unwrap();
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, target, "lambda {lambda} margin {margin}");
        }
    }

    #[test]
    fn empty_test_set_is_rejected() {
        let model = FusionModel {
            text_protos: array![[1.0, 0.0], [0.0, 1.0]],
            classifier: GraphClassifier::zeros(2, 2),
            lambda: 0.8,
        };
        assert!(matches!(
            evaluate(&model, &Mat::zeros((0, 2)), &[], EvalMode::ZeroShot),
            Err(ProbeError::EmptyTestSet)
        ));
    }

    #[test]
    fn multi_seed_eval_aggregates_per_seed_rows() {
        use crate::graphdata::{synth_sbm, SbmConfig};
        let g = synth_sbm(&SbmConfig {
            nodes_per_class: 15,
            n_classes: 3,
            p_intra: 0.7,
            p_inter: 0.1,
            feature_noise: 0.2,
            proto_separation: 2.0,
            dim: None,
            seed: 0,
        })
        .unwrap();
        let cfg = SweepConfig {
            train: crate::trainer::TrainConfig {
                epochs: 3,
                monitor_enabled: false,
                ..crate::trainer::TrainConfig::default()
            },
            shots: Some(2),
            val_frac: 0.25,
            lambda: 0.8,
            probe_iters: 50,
            probe_lr: 0.5,
            dataset: "toy".into(),
        };
        let (rows, summaries) = multi_seed_eval(&g, &cfg, &[0, 1, 2]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.mode == EvalMode::Fused && r.shots == Some(2)));
        assert_eq!(summaries.len(), 1);
        assert_eq!(summaries[0].n_seeds, 3);
        let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
        let (mean, std) = mean_std(&accs);
        assert!((summaries[0].mean - mean).abs() < 1e-15);
        assert!((summaries[0].std - std).abs() < 1e-15);

        // zero-shot sweeps evaluate the cosine rule only
        let zs = SweepConfig { shots: None, ..cfg.clone() };
        let (rows, summaries) = multi_seed_eval(&g, &zs, &[0, 1]).unwrap();
        assert!(rows.iter().all(|r| r.mode == EvalMode::ZeroShot));
        assert_eq!(summaries[0].n_seeds, 2);

        assert!(matches!(
            multi_seed_eval(&g, &zs, &[0]),
            Err(ProbeError::TooFewSeeds(1))
        ));

        // csv writers keep the documented shapes
        let csv = results_csv(&rows);
        assert!(csv.starts_with("dataset,mode,seed,shots,accuracy\n"));
        assert_eq!(csv.lines().count(), 3);
        let s = summary_csv(&summaries);
        assert!(s.starts_with("dataset,mode,shots,mean,std,n_seeds\n"));
    }

    #[test]
    fn mean_std_hand_values() {
        let (m, s) = mean_std(&[0.4, 0.6]);
        assert!((m - 0.5).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-15);
        let (m, s) = mean_std(&[0.7, 0.7, 0.7]);
        assert!((m - 0.7).abs() < 1e-15);
        assert!(s < 1e-15);
    }
}
