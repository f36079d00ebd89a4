//! Representation-gap measurements.
//!
//! `sim_pos` is the (optionally degree-weighted) mean cosine similarity of
//! each node to its own class prototype, `sim_neg` the uniform mean over all
//! other-class prototypes, and `gap = sim_pos - sim_neg`. `sim_overall`
//! averages over every node-prototype pair. Per-class embedding variance
//! tracks within-class collapse.

use crate::graphdata::TagGraph;
use crate::linalg::{kahan_sum, Mat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weights must be non-negative with a positive sum")]
    BadWeights,
    #[error("non-finite input value")]
    NonFinite,
    #[error("prototype matrix is entirely zero")]
    ZeroPrototypes,
    #[error("need at least one embedding row")]
    Empty,
}

/// One epoch's gap measurements. Classes with no members report `None`
/// variance rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub epoch: usize,
    pub sim_overall: f64,
    pub sim_pos: f64,
    pub sim_neg: f64,
    pub gap: f64,
    pub var_per_class: Vec<Option<f64>>,
}

impl GapReport {
    /// Mean variance over the classes that are present.
    pub fn var_mean(&self) -> Option<f64> {
        let present: Vec<f64> = self.var_per_class.iter().filter_map(|&v| v).collect();
        if present.is_empty() {
            None
        } else {
            Some(kahan_sum(present.iter().copied()) / present.len() as f64)
        }
    }

    /// CSV row: `epoch,sim_overall,sim_pos,sim_neg,gap,var_mean`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.sim_overall,
            self.sim_pos,
            self.sim_neg,
            self.gap,
            self.var_mean().map_or(String::new(), |v| v.to_string())
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "epoch": self.epoch,
            "sim_overall": self.sim_overall,
            "sim_pos": self.sim_pos,
            "sim_neg": self.sim_neg,
            "gap": self.gap,
            "var_per_class": self.var_per_class,
            "var_mean": self.var_mean(),
        })
    }
}

/// Cosine similarity; zero if either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::LengthMismatch(u.len(), v.len()));
    }
    let nu = crate::linalg::norm(u);
    let nv = crate::linalg::norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(crate::linalg::dot(u, v) / (nu * nv))
}

/// Computes the full gap report over embeddings `h` (N x d), prototypes `t`
/// (C x d) and labels `y`. Optional per-node weights apply to `sim_pos` only.
pub fn gap_report(
    h: &Mat,
    t: &Mat,
    y: &[usize],
    weights: Option<&[f64]>,
) -> Result<GapReport, MetricError> {
    let (n, c) = (h.nrows(), t.nrows());
    if n == 0 {
        return Err(MetricError::Empty);
    }
    if h.ncols() != t.ncols() {
        return Err(MetricError::ShapeMismatch(format!(
            "embedding dim {} vs prototype dim {}",
            h.ncols(),
            t.ncols()
        )));
    }
    if y.len() != n {
        return Err(MetricError::ShapeMismatch(format!(
            "{n} embeddings for {} labels",
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= c) {
        return Err(MetricError::ShapeMismatch(format!(
            "label {bad} out of range for {c} prototypes"
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(MetricError::LengthMismatch(w.len(), n));
        }
        if w.iter().any(|&x| !(x >= 0.0)) || !(kahan_sum(w.iter().copied()) > 0.0) {
            return Err(MetricError::BadWeights);
        }
    }

    // cosine table, one pass
    let mut cos = Mat::zeros((n, c));
    for i in 0..n {
        let hi = h.row(i);
        let hi = hi.as_slice().expect("contiguous row");
        for j in 0..c {
            let tj = t.row(j);
            cos[[i, j]] = cosine(hi, tj.as_slice().expect("contiguous row"))?;
        }
    }

    let sim_overall = kahan_sum(cos.iter().copied()) / (n * c) as f64;

    let sim_pos = match weights {
        None => kahan_sum((0..n).map(|i| cos[[i, y[i]]])) / n as f64,
        Some(w) => {
            let wsum = kahan_sum(w.iter().copied());
            kahan_sum((0..n).map(|i| w[i] * cos[[i, y[i]]])) / wsum
        }
    };

    let sim_neg = if c > 1 {
        let per_node = (0..n).map(|i| {
            kahan_sum((0..c).filter(|&j| j != y[i]).map(|j| cos[[i, j]])) / (c - 1) as f64
        });
        kahan_sum(per_node) / n as f64
    } else {
        0.0
    };

    // per-class variance around the class centroid
    let d = h.ncols();
    let mut var_per_class = Vec::with_capacity(c);
    for class in 0..c {
        let members: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
        if members.is_empty() {
            var_per_class.push(None);
            continue;
        }
        let m = members.len() as f64;
        let mut centroid = vec![0.0; d];
        for &i in &members {
            for (k, ck) in centroid.iter_mut().enumerate() {
                *ck += h[[i, k]];
            }
        }
        for ck in &mut centroid {
            *ck /= m;
        }
        let var = kahan_sum(members.iter().map(|&i| {
            let mut sq = 0.0;
            for (k, &ck) in centroid.iter().enumerate() {
                let diff = h[[i, k]] - ck;
                sq += diff * diff;
            }
            sq
        })) / m;
        var_per_class.push(Some(var));
    }

    Ok(GapReport {
        epoch: 0,
        sim_overall,
        sim_pos,
        sim_neg,
        gap: sim_pos - sim_neg,
        var_per_class,
    })
}

/// Structural-importance weights `w_i = (deg(i)+1) / (max_j deg(j)+1)`.
pub fn degree_weights(g: &TagGraph) -> Vec<f64> {
    let deg = g.degrees();
    let max = deg.iter().copied().max().unwrap_or(0) as f64 + 1.0;
    deg.iter().map(|&d| (d as f64 + 1.0) / max).collect()
}

/// Exponential moving average; the first observation seeds the value.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    value: Option<f64>,
    decay: f64,
}

impl EmaState {
    pub fn new(decay: f64) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "decay must be in (0,1)");
        Self { value: None, decay }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Folds in one observation and returns the smoothed value.
    pub fn update(&mut self, x: f64) -> Result<f64, MetricError> {
        if !x.is_finite() {
            return Err(MetricError::NonFinite);
        }
        let next = match self.value {
            None => x,
            Some(v) => self.decay * v + (1.0 - self.decay) * x,
        };
        self.value = Some(next);
        Ok(next)
    }
}

/// Least-squares split of each prototype row into its projection onto the row
/// space of `h` and the orthogonal remainder.
#[derive(Debug, Clone)]
pub struct SpanDecomposition {
    pub parallel: Mat,
    pub orthogonal: Mat,
    /// `|T_perp|_F / |T|_F`
    pub perp_norm_fraction: f64,
}

const SPAN_RIDGE: f64 = 1e-10;

fn gram(h: &Mat) -> Mat {
    let n = h.nrows();
    let mut g = Mat::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = crate::linalg::dot(
                h.row(i).as_slice().expect("contiguous"),
                h.row(j).as_slice().expect("contiguous"),
            );
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

/// Projects `t` onto the row space of `h` via normal equations with ridge
/// `1e-10` on the Gram matrix, refined once so the parallel and orthogonal
/// parts are orthogonal well below the ridge scale.
pub fn span_decompose(h: &Mat, t: &Mat) -> Result<SpanDecomposition, MetricError> {
    if h.nrows() == 0 {
        return Err(MetricError::Empty);
    }
    if h.ncols() != t.ncols() {
        return Err(MetricError::ShapeMismatch(format!(
            "embedding dim {} vs prototype dim {}",
            h.ncols(),
            t.ncols()
        )));
    }
    let t_norm = crate::linalg::norm(t.as_slice().expect("contiguous"));
    if t_norm == 0.0 {
        return Err(MetricError::ZeroPrototypes);
    }
    let n = h.nrows();
    let mut g = gram(h);
    for i in 0..n {
        g[[i, i]] += SPAN_RIDGE;
    }

    // project(v) = H^T (G + ridge)^{-1} H v, one refinement pass
    let project = |rhs: &Mat| -> Result<Mat, MetricError> {
        // rhs: C x d, want H v^T per column -> compute H * rhs^T (n x C)
        let hv = crate::linalg::matmul_nt(h, rhs);
        let coef = crate::linalg::cholesky_solve(&g, &hv)
            .map_err(|e| MetricError::ShapeMismatch(e.into()))?;
        // parallel part: coef^T H  (C x d)
        Ok(crate::linalg::matmul_tn(&coef, h))
    };

    let par0 = project(t)?;
    let resid0 = t - &par0;
    let correction = project(&resid0)?;
    let parallel = par0 + correction;
    let orthogonal = t - &parallel;

    let perp_norm_fraction =
        crate::linalg::norm(orthogonal.as_slice().expect("contiguous")) / t_norm;

    Ok(SpanDecomposition {
        parallel,
        orthogonal,
        perp_norm_fraction,
    })
}
