//! Alignment training loop: AdamW with cosine learning-rate decay, per-epoch
//! gap reports on the validation split, and the negative-similarity monitor.
//!
//! A run is fully determined by its config and data: one ChaCha stream seeds
//! initialization and batch shuffling, every reduction has a fixed order, and
//! repeated runs produce byte-identical curves.

use crate::encoder::{self, EncoderGrads, EncoderParams};
use crate::gapmetrics::{self, GapReport};
use crate::graphdata::{SplitSpec, TagGraph};
use crate::linalg::{self, Mat};
use crate::monitor::{MonitorError, MonitorState};
use crate::objectives;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Encoder(#[from] encoder::EncoderError),
    #[error(transparent)]
    Loss(#[from] objectives::LossError),
    #[error(transparent)]
    Metric(#[from] gapmetrics::MetricError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

/// Training hyperparameters. Defaults follow the reference setup: AdamW at
/// lr 1e-4 with cosine decay, temperature 0.2, up to 140 epochs, batches of
/// 256 when the training pool is larger, EMA decay 0.9, and threshold 0.10.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub tau: f64,
    pub theta: f64,
    pub ema_decay: f64,
    pub monitor_enabled: bool,
    pub seed: u64,
    pub schedule: Schedule,
    pub d_hidden: usize,
    pub degree_weighted: bool,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 140,
            batch: 256,
            tau: 0.2,
            theta: 0.10,
            ema_decay: 0.9,
            monitor_enabled: true,
            seed: 0,
            schedule: Schedule::Cosine,
            d_hidden: 128,
            degree_weighted: false,
            weight_decay: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0) {
            return Err(TrainError::BadConfig(format!("lr={} must be > 0", self.lr)));
        }
        if self.epochs < 1 {
            return Err(TrainError::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch < 1 {
            return Err(TrainError::BadConfig("batch must be >= 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(TrainError::BadConfig(format!("tau={} must be > 0", self.tau)));
        }
        if !(self.theta > 0.0) {
            return Err(TrainError::BadConfig(format!(
                "theta={} must be > 0",
                self.theta
            )));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(TrainError::BadConfig(format!(
                "ema_decay={} must be in (0,1)",
                self.ema_decay
            )));
        }
        if self.d_hidden == 0 {
            return Err(TrainError::BadConfig("d_hidden must be > 0".into()));
        }
        Ok(())
    }
}

/// AdamW optimizer state: first and second moments per weight matrix plus the
/// shared step counter.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: EncoderGrads,
    v: EncoderGrads,
}

impl AdamWState {
    pub fn new(params: &EncoderParams, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: EncoderGrads::zeros_like(params),
            v: EncoderGrads::zeros_like(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn adamw_update_matrix(
    param: &mut Mat,
    grad: &Mat,
    m: &mut Mat,
    v: &mut Mat,
    state_step: u64,
    lr_t: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) {
    let bc1 = 1.0 - beta1.powi(state_step as i32);
    let bc2 = 1.0 - beta2.powi(state_step as i32);
    for ((p, &g), (mi, vi)) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(m.iter_mut().zip(v.iter_mut()))
    {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p -= lr_t * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *p);
    }
}

/// One decoupled-weight-decay AdamW step with bias correction.
pub fn adamw_step(
    params: &mut EncoderParams,
    grads: &EncoderGrads,
    state: &mut AdamWState,
    lr_t: f64,
) {
    assert_eq!(params.w1.dim(), grads.w1.dim(), "w1 shape mismatch");
    assert_eq!(params.w2.dim(), grads.w2.dim(), "w2 shape mismatch");
    assert_eq!(params.proj.dim(), grads.proj.dim(), "proj shape mismatch");
    state.step += 1;
    let (b1, b2, eps, wd) = (state.beta1, state.beta2, state.eps, state.weight_decay);
    adamw_update_matrix(&mut params.w1, &grads.w1, &mut state.m.w1, &mut state.v.w1, state.step, lr_t, b1, b2, eps, wd);
    adamw_update_matrix(&mut params.w2, &grads.w2, &mut state.m.w2, &mut state.v.w2, state.step, lr_t, b1, b2, eps, wd);
    adamw_update_matrix(&mut params.proj, &grads.proj, &mut state.m.proj, &mut state.v.proj, state.step, lr_t, b1, b2, eps, wd);
}

/// Cosine decay from `lr0` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

/// One epoch's logged values: the gap report on the validation split plus the
/// training loss, validation accuracy, and the monitor trace fields.
#[derive(Debug, Clone)]
pub struct EpochRow {
    pub report: GapReport,
    pub loss: f64,
    pub val_acc: f64,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub stopped: bool,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub final_params: EncoderParams,
    pub curves: Vec<EpochRow>,
    pub stopped_at: Option<usize>,
    pub monitor_baseline: Option<f64>,
}

fn select_rows(m: &Mat, ids: &[usize]) -> Mat {
    let mut out = Mat::zeros((ids.len(), m.ncols()));
    for (r, &i) in ids.iter().enumerate() {
        for k in 0..m.ncols() {
            out[[r, k]] = m[[i, k]];
        }
    }
    out
}

fn select_labels(y: &[usize], ids: &[usize]) -> Vec<usize> {
    ids.iter().map(|&i| y[i]).collect()
}

/// Zero-shot validation rule: argmax cosine against the prototypes, ties to
/// the lowest class index.
pub fn cosine_accuracy(h: &Mat, t: &Mat, y: &[usize]) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    let mut correct = 0usize;
    for i in 0..h.nrows() {
        let hi = h.row(i);
        let hi = hi.as_slice().expect("contiguous");
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for j in 0..t.nrows() {
            let sim = gapmetrics::cosine(hi, t.row(j).as_slice().expect("contiguous"))
                .expect("matching dims");
            if sim > best_sim {
                best_sim = sim;
                best = j;
            }
        }
        if best == y[i] {
            correct += 1;
        }
    }
    correct as f64 / h.nrows() as f64
}

/// Runs contrastive alignment training.
///
/// Per epoch: encode all nodes, take AdamW steps on the training batches,
/// re-encode, log the gap report and accuracy on the validation split, and
/// consult the monitor. With an empty training split nothing is trained: the
/// initialized encoder is returned as-is for downstream zero-shot evaluation.
pub fn run_training(
    g: &TagGraph,
    split: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<RunArtifacts, TrainError> {
    cfg.validate()?;
    let adj = encoder::normalize_adjacency(g);
    let mut params = encoder::init_params(g.dim, cfg.d_hidden, g.dim, cfg.seed)?;
    let protos_unit = linalg::unit_rows(&g.text_protos);

    if split.train_ids.is_empty() {
        return Ok(RunArtifacts {
            final_params: params,
            curves: Vec::new(),
            stopped_at: None,
            monitor_baseline: None,
        });
    }

    let y_val = select_labels(&g.labels, &split.val_ids);
    let weights = if cfg.degree_weighted {
        Some(gapmetrics::degree_weights(g))
    } else {
        None
    };
    let val_weights: Option<Vec<f64>> = weights
        .as_ref()
        .map(|w| split.val_ids.iter().map(|&i| w[i]).collect());

    let mut monitor = if cfg.monitor_enabled {
        let mut m = MonitorState::new(cfg.theta, cfg.ema_decay)?;
        let h0 = encoder::encode(&params, &adj, &g.features)?;
        let h0_val = select_rows(&h0, &split.val_ids);
        m.establish_baseline(&h0_val, &g.text_protos, &y_val)?;
        Some(m)
    } else {
        None
    };

    let mut opt = AdamWState::new(&params, cfg.weight_decay);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut curves: Vec<EpochRow> = Vec::with_capacity(cfg.epochs);
    let mut stopped_at = None;
    let mut prev_gap: Option<f64> = None;

    for epoch in 0..cfg.epochs {
        let lr_t = match cfg.schedule {
            Schedule::Cosine => cosine_lr(epoch, cfg.epochs, cfg.lr),
            Schedule::Constant => cfg.lr,
        };

        // batch order for this epoch
        let batches: Vec<Vec<usize>> = if split.train_ids.len() <= cfg.batch {
            vec![split.train_ids.clone()]
        } else {
            let mut order: Vec<usize> = (0..split.train_ids.len()).collect();
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            order
                .chunks(cfg.batch)
                .map(|chunk| chunk.iter().map(|&k| split.train_ids[k]).collect())
                .collect()
        };

        let mut loss_terms = Vec::with_capacity(batches.len());
        for batch_ids in &batches {
            let h = encoder::encode(&params, &adj, &g.features)?;
            let h_batch = select_rows(&h, batch_ids);
            let y_batch = select_labels(&g.labels, batch_ids);
            let loss = objectives::contrastive_loss(&h_batch, &protos_unit, &y_batch, cfg.tau)?;
            loss_terms.push(loss.total);
            let g_batch = objectives::contrastive_grad(&h_batch, &protos_unit, &y_batch, cfg.tau)?;
            let mut upstream = Mat::zeros((g.n_nodes, g.dim));
            for (r, &i) in batch_ids.iter().enumerate() {
                for k in 0..g.dim {
                    upstream[[i, k]] = g_batch[[r, k]];
                }
            }
            let grads = encoder::encode_backward(&params, &adj, &g.features, &upstream)?;
            adamw_step(&mut params, &grads, &mut opt, lr_t);
        }
        let loss = linalg::kahan_sum(loss_terms.iter().copied()) / loss_terms.len() as f64;

        // epoch metrics on the validation split, after this epoch's updates
        let h = encoder::encode(&params, &adj, &g.features)?;
        let h_val = select_rows(&h, &split.val_ids);
        let mut report =
            gapmetrics::gap_report(&h_val, &g.text_protos, &y_val, val_weights.as_deref())?;
        report.epoch = epoch;
        let val_acc = cosine_accuracy(&h_val, &g.text_protos, &y_val);

        let rho = prev_gap.map(|p| report.gap - p);
        prev_gap = Some(report.gap);
        let (delta, stopped) = match monitor.as_mut() {
            Some(m) => {
                m.record_gap(report.gap);
                let stop = m.should_stop(report.sim_neg)?;
                let rec = m.history().last().expect("record just pushed");
                (Some(rec.delta), stop)
            }
            None => (None, false),
        };

        curves.push(EpochRow {
            report,
            loss,
            val_acc,
            delta,
            rho,
            stopped,
        });

        if stopped {
            stopped_at = Some(epoch);
            break;
        }
    }

    Ok(RunArtifacts {
        final_params: params,
        curves,
        stopped_at,
        monitor_baseline: monitor.as_ref().and_then(|m| m.baseline()),
    })
}

/// Curves CSV: '.' decimal, LF line endings, header always present. Absent
/// values (rho at epoch 0, delta without a monitor) serialize as empty cells.
pub const CURVES_HEADER: &str =
    "epoch,sim_overall,sim_pos,sim_neg,gap,var_mean,loss,val_acc,delta,rho,stopped";

fn opt_cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn curves_to_csv(rows: &[EpochRow]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.report.csv_row(),
            r.loss,
            r.val_acc,
            opt_cell(r.delta),
            opt_cell(r.rho),
            u8::from(r.stopped),
        ));
    }
    out
}

pub fn curves_to_jsonl(rows: &[EpochRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let mut obj = r.report.to_json();
        let map = obj.as_object_mut().expect("report is an object");
        map.insert("loss".into(), serde_json::json!(r.loss));
        map.insert("val_acc".into(), serde_json::json!(r.val_acc));
        map.insert("delta".into(), serde_json::json!(r.delta));
        map.insert("rho".into(), serde_json::json!(r.rho));
        map.insert("stopped".into(), serde_json::json!(r.stopped));
        out.push_str(&serde_json::to_string(&obj).expect("serializes"));
        out.push('\n');
    }
    out
}
