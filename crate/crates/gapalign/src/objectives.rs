//! Alignment and classification objectives with analytic gradients.
//!
//! The contrastive loss treats each node's class prototypes as the candidate
//! set: logits are scaled dot products between the node embedding and every
//! prototype row. Prototypes are frozen; gradients flow only to the node side.

use crate::linalg::{kahan_sum, Mat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A reduced loss with its per-example terms.
///
/// `neg_share` is the mean softmax mass on non-target classes, i.e. the
/// fraction of each example's gradient attributable to negative prototypes;
/// it lies in [0, 1] and approaches 1 when negatives dominate the update.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub total: f64,
    pub per_node: Vec<f64>,
    pub neg_share: f64,
}

fn check_labels(y: &[usize], n_classes: usize) -> Result<(), LossError> {
    for &label in y {
        if label >= n_classes {
            return Err(LossError::LabelOutOfRange { label, n_classes });
        }
    }
    Ok(())
}

fn check_batch(h: &Mat, t: &Mat, y: &[usize]) -> Result<(), LossError> {
    if h.ncols() != t.ncols() {
        return Err(LossError::ShapeMismatch(format!(
            "embedding dim {} vs prototype dim {}",
            h.ncols(),
            t.ncols()
        )));
    }
    if h.nrows() != y.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} embeddings for {} labels",
            h.nrows(),
            y.len()
        )));
    }
    check_labels(y, t.nrows())
}

/// Logits for node `i`: `h_i . t_j / tau` for every class j.
fn logit_row(h: &Mat, t: &Mat, i: usize, tau: f64) -> Vec<f64> {
    let d = h.ncols();
    (0..t.nrows())
        .map(|j| {
            let mut acc = 0.0;
            for k in 0..d {
                acc += h[[i, k]] * t[[j, k]];
            }
            acc / tau
        })
        .collect()
}

/// Max-subtracted softmax; returns (probabilities, logsumexp).
fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z = kahan_sum(exps.iter().copied());
    let lse = m + z.ln();
    (exps.iter().map(|&e| e / z).collect(), lse)
}

/// Mean InfoNCE-style loss of each node against its class prototype, with all
/// other prototypes as negatives.
pub fn contrastive_loss(h: &Mat, t: &Mat, y: &[usize], tau: f64) -> Result<LossValue, LossError> {
    if !(tau > 0.0) {
        return Err(LossError::BadTemperature(tau));
    }
    check_batch(h, t, y)?;
    let b = h.nrows();
    let mut per_node = Vec::with_capacity(b);
    let mut neg_mass = Vec::with_capacity(b);
    for i in 0..b {
        let logits = logit_row(h, t, i, tau);
        let (probs, lse) = softmax(&logits);
        per_node.push(lse - logits[y[i]]);
        neg_mass.push(1.0 - probs[y[i]]);
    }
    let total = mean(&per_node);
    let neg_share = mean(&neg_mass);
    Ok(LossValue {
        total,
        per_node,
        neg_share,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        kahan_sum(v.iter().copied()) / v.len() as f64
    }
}

/// Gradient of [`contrastive_loss`] with respect to `h`; prototypes stay
/// frozen. Row i is `(1/(B tau)) sum_j (p_ij - [j == y_i]) t_j`.
pub fn contrastive_grad(h: &Mat, t: &Mat, y: &[usize], tau: f64) -> Result<Mat, LossError> {
    if !(tau > 0.0) {
        return Err(LossError::BadTemperature(tau));
    }
    check_batch(h, t, y)?;
    let (b, d, c) = (h.nrows(), h.ncols(), t.nrows());
    let scale = 1.0 / (b as f64 * tau);
    let mut grad = Mat::zeros((b, d));
    for i in 0..b {
        let logits = logit_row(h, t, i, tau);
        let (probs, _) = softmax(&logits);
        for j in 0..c {
            let coef = scale * (probs[j] - if j == y[i] { 1.0 } else { 0.0 });
            if coef == 0.0 {
                continue;
            }
            for k in 0..d {
                grad[[i, k]] += coef * t[[j, k]];
            }
        }
    }
    Ok(grad)
}

/// Empirical negative-sample domination diagnostic:
/// `((C-1)/C) * mean_i log sum_{j != y_i} exp(h_i . t_j / tau)`.
/// Grows with the class count and signals when negative repulsion dominates.
pub fn neg_domination(
    n_classes: usize,
    h: &Mat,
    t: &Mat,
    y: &[usize],
    tau: f64,
) -> Result<f64, LossError> {
    if n_classes < 2 {
        return Err(LossError::TooFewClasses(n_classes));
    }
    if !(tau > 0.0) {
        return Err(LossError::BadTemperature(tau));
    }
    check_batch(h, t, y)?;
    let b = h.nrows();
    let mut terms = Vec::with_capacity(b);
    for i in 0..b {
        let logits = logit_row(h, t, i, tau);
        let negs: Vec<f64> = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y[i])
            .map(|(_, &l)| l)
            .collect();
        let m = negs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = kahan_sum(negs.iter().map(|&l| (l - m).exp()));
        terms.push(m + z.ln());
    }
    let factor = (n_classes as f64 - 1.0) / n_classes as f64;
    Ok(factor * mean(&terms))
}

/// Mean softmax cross-entropy over explicit logits, plus its gradient
/// `(p - onehot)/B`.
pub fn cross_entropy(logits: &Mat, y: &[usize]) -> Result<(LossValue, Mat), LossError> {
    let (b, c) = (logits.nrows(), logits.ncols());
    if y.len() != b {
        return Err(LossError::ShapeMismatch(format!(
            "{b} logit rows for {} labels",
            y.len()
        )));
    }
    check_labels(y, c)?;
    let mut per_node = Vec::with_capacity(b);
    let mut neg_mass = Vec::with_capacity(b);
    let mut grad = Mat::zeros((b, c));
    for i in 0..b {
        let row: Vec<f64> = (0..c).map(|j| logits[[i, j]]).collect();
        let (probs, lse) = softmax(&row);
        per_node.push(lse - row[y[i]]);
        neg_mass.push(1.0 - probs[y[i]]);
        for j in 0..c {
            grad[[i, j]] = (probs[j] - if j == y[i] { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    let total = mean(&per_node);
    let neg_share = mean(&neg_mass);
    Ok((
        LossValue {
            total,
            per_node,
            neg_share,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_similarities_give_ln2() {
        // both prototypes at the same angle from h -> uniform softmax over 2
        let h = array![[1.0, 0.0]];
        let t = array![[0.0, 1.0], [0.0, -1.0]];
        let loss = contrastive_loss(&h, &t, &[0], 0.7).unwrap();
        assert!((loss.total - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss.neg_share - 0.5).abs() < 1e-12);
    }

    #[test]
    fn aligned_pair_with_orthogonal_negative_matches_hand_value() {
        // h = t_0, t_1 orthogonal, tau = 0.2 -> logits (5, 0), loss ln(1+e^-5)
        let h = array![[1.0, 0.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = contrastive_loss(&h, &t, &[0], 0.2).unwrap();
        let expect = (1.0 + (-5.0f64).exp()).ln();
        assert!((loss.total - expect).abs() < 1e-12);
        assert!((expect - 0.0067153484891179).abs() < 1e-10);
    }

    #[test]
    fn loss_matches_double_loop_oracle() {
        let h = array![[0.6, 0.8, 0.0], [0.0, 0.0, 1.0]];
        let t = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        let y = [1usize, 2];
        let tau = 0.3;
        let loss = contrastive_loss(&h, &t, &y, tau).unwrap();
        // naive double loop without max subtraction
        let mut expect = 0.0;
        for i in 0..2 {
            let mut z = 0.0;
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += h[[i, k]] * t[[j, k]];
                }
                z += (dot / tau).exp();
            }
            let mut pos = 0.0;
            for k in 0..3 {
                pos += h[[i, k]] * t[[y[i], k]];
            }
            expect += -((pos / tau).exp() / z).ln();
        }
        expect /= 2.0;
        assert!((loss.total - expect).abs() < 1e-10);
    }

    #[test]
    fn saturated_softmax_has_vanishing_gradient() {
        // massive margin: logits ~ (100, 0)
        let h = array![[1.0, 0.0]];
        let t = array![[1.0, 0.0], [-1.0, 0.0]];
        let g = contrastive_grad(&h, &t, &[0], 0.01).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn neg_domination_prefactor_and_hand_value() {
        // C=2: prefactor is exactly 1/2
        let h = array![[1.0, 0.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let v = neg_domination(2, &h, &t, &[0], 1.0).unwrap();
        assert!((v - 0.5 * 0.0f64.exp().ln()).abs() < 1e-12); // log(e^0) = 0

        // all negative sims 0, tau=1, C=3 -> (2/3) log 2
        let h = array![[1.0, 0.0, 0.0]];
        let t = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let v = neg_domination(3, &h, &t, &[0], 1.0).unwrap();
        let expect = (2.0 / 3.0) * std::f64::consts::LN_2;
        assert!((v - expect).abs() < 1e-12);
        assert!((expect - 0.46209812037329684).abs() < 1e-12);
    }

    #[test]
    fn neg_domination_nondecreasing_in_class_count() {
        // all negative sims pinned to the same value s: the diagnostic is
        // ((C-1)/C) (s/tau + log(C-1)), non-decreasing in C
        let s = 0.4;
        let tau = 0.5;
        let mut prev = f64::NEG_INFINITY;
        for c in 2..=10 {
            let mut t = Mat::zeros((c, c + 1));
            // prototype j: s on shared axis 0 except the positive class,
            // which is orthogonal
            for j in 0..c {
                if j == 0 {
                    t[[j, c]] = 1.0;
                } else {
                    t[[j, 0]] = s;
                }
            }
            let mut h = Mat::zeros((1, c + 1));
            h[[0, 0]] = 1.0;
            let v = neg_domination(c, &h, &t, &[0], tau).unwrap();
            let expect = ((c as f64 - 1.0) / c as f64) * (s / tau + ((c - 1) as f64).ln());
            assert!((v - expect).abs() < 1e-10);
            assert!(v >= prev, "C={c}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn neg_domination_requires_two_classes() {
        let h = array![[1.0]];
        let t = array![[1.0]];
        assert!(matches!(
            neg_domination(1, &h, &t, &[0], 1.0),
            Err(LossError::TooFewClasses(1))
        ));
    }

    #[test]
    fn cross_entropy_uniform_is_ln4() {
        let logits = Mat::zeros((2, 4));
        let (loss, _) = cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss.total - 4.0f64.ln()).abs() < 1e-12);
        assert!((4.0f64.ln() - 1.3862943611198906).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_saturated_flushes_to_zero() {
        let mut logits = Mat::zeros((1, 4));
        logits[[0, 0]] = 100.0;
        let (loss, _) = cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.total < 1e-40);
    }

    #[test]
    fn cross_entropy_matches_brute_force() {
        let logits = array![[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [-0.9, 0.5, 0.2]];
        let y = [2usize, 0, 1];
        let (loss, grad) = cross_entropy(&logits, &y).unwrap();
        let mut expect = 0.0;
        for i in 0..3 {
            let z: f64 = (0..3).map(|j| logits[[i, j]].exp()).sum();
            expect += -(logits[[i, y[i]]].exp() / z).ln();
        }
        expect /= 3.0;
        assert!((loss.total - expect).abs() < 1e-10);
        // gradient rows sum to zero (softmax minus onehot)
        for i in 0..3 {
            let s: f64 = (0..3).map(|j| grad[[i, j]]).sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn total_is_mean_of_per_node() {
        let h = array![[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let y = [0usize, 0, 1];
        let loss = contrastive_loss(&h, &t, &y, 0.2).unwrap();
        let m = loss.per_node.iter().sum::<f64>() / 3.0;
        assert!((loss.total - m).abs() < 1e-15);
        assert!(loss.neg_share >= 0.0 && loss.neg_share <= 1.0);
    }

    #[test]
    fn loss_decreases_along_its_gradient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let (b, c, d) = (4usize, 3usize, 5usize);
        let h = crate::linalg::unit_rows(&Mat::from_shape_fn((b, d), |_| {
            rng.random::<f64>() - 0.5
        }));
        let t = crate::linalg::unit_rows(&Mat::from_shape_fn((c, d), |_| {
            rng.random::<f64>() - 0.5
        }));
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let base = contrastive_loss(&h, &t, &y, 0.2).unwrap().total;
        let grad = contrastive_grad(&h, &t, &y, 0.2).unwrap();
        let mut step = 1e-3;
        let mut decreased = false;
        for _ in 0..20 {
            let h2 = &h - &grad.mapv(|g| step * g);
            let val = contrastive_loss(&h2, &t, &y, 0.2).unwrap().total;
            if val < base {
                decreased = true;
                break;
            }
            step /= 2.0;
        }
        assert!(decreased, "gradient step never decreased the loss");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let h = array![[1.0, 0.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            contrastive_loss(&h, &t, &[2], 0.2),
            Err(LossError::LabelOutOfRange { label: 2, .. })
        ));
        assert!(matches!(
            contrastive_loss(&h, &t, &[0], 0.0),
            Err(LossError::BadTemperature(_))
        ));
    }
}
