//! Gap-dynamics monitoring and the negative-similarity early-stopping rule.
//!
//! A baseline negative similarity is measured on the validation set before
//! any optimizer step. Each epoch folds the current negative similarity into
//! an EMA and stops when the relative change of the smoothed value against
//! the baseline exceeds the threshold. The gap change rate is tracked as a
//! diagnostic only; it never gates stopping.

use crate::gapmetrics::{self, EmaState};
use crate::linalg::Mat;
use thiserror::Error;

/// Baselines smaller than this make the relative change ill-conditioned; the
/// monitor refuses to run rather than divide by (near-)zero or flip sign.
pub const MIN_BASELINE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("threshold must be > 0, got {0}")]
    BadThreshold(f64),
    #[error("empty validation set")]
    EmptyValidation,
    #[error("degenerate baseline {0}: negative similarity must exceed 1e-9")]
    DegenerateBaseline(f64),
    #[error("baseline not established")]
    MissingBaseline,
    #[error("need at least 2 epochs of gap values, got {0}")]
    TooFewEpochs(usize),
    #[error(transparent)]
    Metric(#[from] gapmetrics::MetricError),
}

/// One row of the monitor trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRecord {
    pub epoch: usize,
    pub gap: Option<f64>,
    pub rho: Option<f64>,
    pub delta: f64,
    pub stopped: bool,
}

/// Single-owner monitor state for one training run.
#[derive(Debug, Clone)]
pub struct MonitorState {
    theta: f64,
    sim_neg_base: Option<f64>,
    ema: EmaState,
    history: Vec<MonitorRecord>,
    stopped_at: Option<usize>,
    epoch: usize,
    staged_gap: Option<f64>,
    prev_gap: Option<f64>,
}

impl MonitorState {
    pub fn new(theta: f64, ema_decay: f64) -> Result<Self, MonitorError> {
        if !(theta > 0.0) {
            return Err(MonitorError::BadThreshold(theta));
        }
        Ok(Self {
            theta,
            sim_neg_base: None,
            ema: EmaState::new(ema_decay),
            history: Vec::new(),
            stopped_at: None,
            epoch: 0,
            staged_gap: None,
            prev_gap: None,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn baseline(&self) -> Option<f64> {
        self.sim_neg_base
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    pub fn history(&self) -> &[MonitorRecord] {
        &self.history
    }

    pub fn last_delta(&self) -> Option<f64> {
        self.history.last().map(|r| r.delta)
    }

    /// Measures the baseline negative similarity from pre-adaptation encoder
    /// outputs on the validation set and stores it. Must be called before any
    /// training step; fails on an empty validation set or a baseline too
    /// small (or negative) for the relative-change rule.
    pub fn establish_baseline(
        &mut self,
        h_val: &Mat,
        t: &Mat,
        y_val: &[usize],
    ) -> Result<f64, MonitorError> {
        if h_val.nrows() == 0 {
            return Err(MonitorError::EmptyValidation);
        }
        let report = gapmetrics::gap_report(h_val, t, y_val, None)?;
        let base = report.sim_neg;
        if base < MIN_BASELINE {
            return Err(MonitorError::DegenerateBaseline(base));
        }
        self.sim_neg_base = Some(base);
        Ok(base)
    }

    /// Sets an externally computed baseline (used when restoring state).
    pub fn set_baseline(&mut self, base: f64) -> Result<(), MonitorError> {
        if base < MIN_BASELINE {
            return Err(MonitorError::DegenerateBaseline(base));
        }
        self.sim_neg_base = Some(base);
        Ok(())
    }

    /// Stages the epoch's gap value so the next [`Self::should_stop`] call can
    /// record it (and its finite difference) in the trace.
    pub fn record_gap(&mut self, gap: f64) {
        self.staged_gap = Some(gap);
    }

    /// Folds the epoch's negative similarity into the EMA, computes the
    /// relative change of the smoothed value against the baseline, and
    /// reports whether training should stop. The first crossing latches:
    /// later calls keep returning `true` without mutating the EMA.
    pub fn should_stop(&mut self, sim_neg_curr: f64) -> Result<bool, MonitorError> {
        let base = self.sim_neg_base.ok_or(MonitorError::MissingBaseline)?;
        let gap = self.staged_gap.take();

        if self.stopped_at.is_some() {
            let delta = self.last_delta().unwrap_or(0.0);
            self.history.push(MonitorRecord {
                epoch: self.epoch,
                gap,
                rho: None,
                delta,
                stopped: true,
            });
            self.epoch += 1;
            return Ok(true);
        }

        let smoothed = self.ema.update(sim_neg_curr)?;
        let delta = relative_change(base, smoothed)?;
        let stop = delta > self.theta;
        let rho = match (gap, self.prev_gap) {
            (Some(g), Some(p)) => Some(g - p),
            _ => None,
        };
        if gap.is_some() {
            self.prev_gap = gap;
        }
        if stop {
            self.stopped_at = Some(self.epoch);
        }
        self.history.push(MonitorRecord {
            epoch: self.epoch,
            gap,
            rho,
            delta,
            stopped: stop,
        });
        self.epoch += 1;
        Ok(stop)
    }
}

/// Relative change `|curr - base| / base`; the baseline
/// must be strictly positive and above [`MIN_BASELINE`].
pub fn relative_change(base: f64, curr: f64) -> Result<f64, MonitorError> {
    if base < MIN_BASELINE {
        return Err(MonitorError::DegenerateBaseline(base));
    }
    Ok((curr - base).abs() / base)
}

/// Per-epoch finite differences of the gap series.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRateSeries {
    /// `rhos[k] = gaps[k+1] - gaps[k]`, i.e. the rate at epoch `k+1`.
    pub rhos: Vec<f64>,
    /// First epoch (index into `gaps`) where the rate crosses from positive
    /// to negative, if it ever does.
    pub transition_epoch: Option<usize>,
}

/// Discretizes the gap change rate as consecutive differences and flags the
/// first positive-to-negative sign crossing.
pub fn gap_rate(gaps: &[f64]) -> Result<GapRateSeries, MonitorError> {
    if gaps.len() < 2 {
        return Err(MonitorError::TooFewEpochs(gaps.len()));
    }
    let rhos: Vec<f64> = gaps.windows(2).map(|w| w[1] - w[0]).collect();
    let mut transition_epoch = None;
    for k in 1..rhos.len() {
        if rhos[k - 1] > 0.0 && rhos[k] < 0.0 {
            transition_epoch = Some(k + 1);
            break;
        }
    }
    Ok(GapRateSeries {
        rhos,
        transition_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn baseline_from_orthonormal_toy_is_degenerate() {
        let mut m = MonitorState::new(0.1, 0.9).unwrap();
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        // sim_neg = 0 makes the relative change undefined
        assert!(matches!(
            m.establish_baseline(&h, &t, &[0, 1]),
            Err(MonitorError::DegenerateBaseline(_))
        ));
    }

    #[test]
    fn baseline_from_identical_vectors_is_one() {
        let mut m = MonitorState::new(0.1, 0.9).unwrap();
        let h = array![[0.5, 0.5], [0.5, 0.5]];
        let t = array![[0.5, 0.5], [0.5, 0.5]];
        let base = m.establish_baseline(&h, &t, &[0, 1]).unwrap();
        assert!((base - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_matches_gap_report_sim_neg() {
        let h = array![[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]];
        let t = array![[0.8, 0.6], [0.6, 0.8]];
        let y = [0usize, 1, 0];
        let expect = gapmetrics::gap_report(&h, &t, &y, None).unwrap().sim_neg;
        let mut m = MonitorState::new(0.1, 0.9).unwrap();
        let base = m.establish_baseline(&h, &t, &y).unwrap();
        assert_eq!(base, expect);
        assert!(matches!(
            MonitorState::new(0.1, 0.9)
                .unwrap()
                .establish_baseline(&Mat::zeros((0, 2)), &t, &[]),
            Err(MonitorError::EmptyValidation)
        ));
    }

    #[test]
    fn gap_rate_hand_differences() {
        let series = gap_rate(&[0.10, 0.15, 0.14]).unwrap();
        assert!((series.rhos[0] - 0.05).abs() < 1e-15);
        assert!((series.rhos[1] + 0.01).abs() < 1e-15);
        assert_eq!(series.transition_epoch, Some(2));
    }

    #[test]
    fn gap_rate_flat_and_increasing_have_no_transition() {
        let flat = gap_rate(&[0.2, 0.2, 0.2, 0.2]).unwrap();
        assert!(flat.rhos.iter().all(|&r| r == 0.0));
        assert_eq!(flat.transition_epoch, None);

        let up = gap_rate(&[0.1, 0.2, 0.35, 0.5]).unwrap();
        assert_eq!(up.transition_epoch, None);

        assert!(matches!(
            gap_rate(&[0.1]),
            Err(MonitorError::TooFewEpochs(1))
        ));
    }

    #[test]
    fn relative_change_hand_values() {
        assert_eq!(relative_change(0.5, 0.5).unwrap(), 0.0);
        assert!((relative_change(0.5, 0.56).unwrap() - 0.12).abs() < 1e-12);
        assert!((relative_change(0.2, 0.17).unwrap() - 0.15).abs() < 1e-12);
        assert!(relative_change(0.0, 0.5).is_err());
        assert!(relative_change(-0.3, 0.5).is_err());
    }

    #[test]
    fn stops_when_smoothed_delta_crosses_theta() {
        // constant stream at 0.56 converges the EMA toward 0.56; delta crosses
        // 0.10 once the smoothed value passes 0.55
        let mut m = MonitorState::new(0.10, 0.9).unwrap();
        m.set_baseline(0.5).unwrap();
        let mut stopped_epoch = None;
        for e in 0..200 {
            if m.should_stop(0.56).unwrap() {
                stopped_epoch = Some(e);
                break;
            }
        }
        let e = stopped_epoch.expect("must stop");
        assert_eq!(m.stopped_at(), Some(e));
        // every prior epoch respected the threshold
        for r in &m.history()[..e] {
            assert!(r.delta <= 0.10);
        }
        assert!(m.history()[e].delta > 0.10);
        // smoothed value at the stop is just above 0.55 -> delta just above 0.10
        assert!((m.history()[e].delta - 0.12).abs() < 0.02);
    }

    #[test]
    fn stays_running_below_threshold() {
        let mut m = MonitorState::new(0.10, 0.9).unwrap();
        m.set_baseline(0.5).unwrap();
        // 0.54 gives delta at most 0.08 < 0.10 even fully converged
        for _ in 0..500 {
            assert!(!m.should_stop(0.54).unwrap());
        }
        assert_eq!(m.stopped_at(), None);

        // constant at the baseline never stops
        let mut m = MonitorState::new(0.10, 0.9).unwrap();
        m.set_baseline(0.5).unwrap();
        for _ in 0..100 {
            assert!(!m.should_stop(0.5).unwrap());
        }
    }

    #[test]
    fn stop_latches_and_baseline_is_required() {
        let mut m = MonitorState::new(0.05, 0.9).unwrap();
        assert!(matches!(
            m.should_stop(0.5),
            Err(MonitorError::MissingBaseline)
        ));
        m.set_baseline(0.5).unwrap();
        assert!(m.should_stop(0.9).unwrap()); // first observation seeds EMA at 0.9
        assert_eq!(m.stopped_at(), Some(0));
        // subsequent calls return true and never move stopped_at
        assert!(m.should_stop(0.5).unwrap());
        assert!(m.should_stop(0.5).unwrap());
        assert_eq!(m.stopped_at(), Some(0));
        assert_eq!(m.history().len(), 3);
    }

    #[test]
    fn monotone_in_deviation() {
        // if a constant stream at deviation x stops by epoch E, any larger
        // deviation stops no later
        let run = |curr: f64| -> Option<usize> {
            let mut m = MonitorState::new(0.10, 0.9).unwrap();
            m.set_baseline(0.5).unwrap();
            for e in 0..300 {
                if m.should_stop(curr).unwrap() {
                    return Some(e);
                }
            }
            None
        };
        let e1 = run(0.56);
        let e2 = run(0.60);
        let e3 = run(0.70);
        assert!(e1.is_some());
        assert!(e2.unwrap() <= e1.unwrap());
        assert!(e3.unwrap() <= e2.unwrap());
    }

    #[test]
    fn rho_is_tracked_from_staged_gaps() {
        let mut m = MonitorState::new(10.0, 0.9).unwrap(); // huge theta, never stops
        m.set_baseline(0.5).unwrap();
        m.record_gap(0.10);
        m.should_stop(0.5).unwrap();
        m.record_gap(0.15);
        m.should_stop(0.5).unwrap();
        m.record_gap(0.14);
        m.should_stop(0.5).unwrap();
        let rhos: Vec<Option<f64>> = m.history().iter().map(|r| r.rho).collect();
        assert_eq!(rhos[0], None);
        assert!((rhos[1].unwrap() - 0.05).abs() < 1e-15);
        assert!((rhos[2].unwrap() + 0.01).abs() < 1e-15);
    }
}
