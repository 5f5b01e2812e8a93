use serde::{Deserialize, Serialize};

use super::metrics::{detection_metrics, DetectionMetrics};
use crate::error::{Error, Result};
use crate::model::{IcodeModel, TrainConfig};
use crate::ode::Trajectory;
use crate::scalar::Scalar;

/// Per-sample one-step residuals and their non-overlapping window sums.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores<T> {
    pub window: usize,
    /// `Σ_i |x̂_i(t) - x_i(t)|`; sample 0 has no predecessor and scores 0.
    pub residuals: Vec<T>,
    /// Sum of `residuals` over samples `[w·window, (w+1)·window)`. A trailing
    /// partial window is dropped.
    pub scores: Vec<T>,
}

impl<T: Scalar> WindowScores<T> {
    /// Window index of each sample, `None` for the dropped tail.
    pub fn window_of(&self, sample: usize) -> Option<usize> {
        let w = sample / self.window;
        (w < self.scores.len()).then_some(w)
    }

    /// Expands per-window flags to per-sample flags.
    pub fn sample_flags(&self, window_flags: &[bool]) -> Vec<bool> {
        (0..self.residuals.len()).map(|t| self.window_of(t).is_some_and(|w| window_flags[w])).collect()
    }
}

/// Residual sums over windows of `window` samples, predicting each sample
/// from the one before it.
pub fn anomaly_scores<T: Scalar>(
    model: &IcodeModel<T>,
    traj: &Trajectory<T>,
    window: usize,
    cfg: &TrainConfig,
) -> Result<WindowScores<T>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    if traj.len() < window.max(2) {
        return Err(Error::InvalidArgument(format!(
            "trajectory of {} samples is shorter than one window of {window}",
            traj.len()
        )));
    }
    let pred = model.predict_trajectory(traj, cfg)?;
    let mut residuals = vec![T::zero(); traj.len()];
    for (t, r) in residuals.iter_mut().enumerate().skip(1) {
        *r = pred.row(t - 1).iter().zip(traj.row(t)).map(|(&a, &b)| (a - b).abs()).sum();
    }
    Ok(WindowScores { window, scores: window_sums(&residuals, window), residuals })
}

pub(crate) fn window_sums<T: Scalar>(residuals: &[T], window: usize) -> Vec<T> {
    residuals.chunks_exact(window).map(|c| c.iter().copied().sum()).collect()
}

/// Nearest-rank empirical quantile: the smallest score with at least a
/// fraction `q` of the scores at or below it.
pub fn pick_threshold<T: Scalar>(scores: &[T], q: f64) -> Result<T> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile must lie in (0, 1), got {q}")));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to threshold".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("anomaly scores".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub window: usize,
    pub threshold: f64,
    pub scores: Vec<f64>,
    /// `scores[w] >= threshold`.
    pub flags: Vec<bool>,
    /// Per-sample metrics, each sample inheriting its window's flag.
    pub metrics: Option<DetectionMetrics>,
}

impl DetectionReport {
    pub fn new<T: Scalar>(scores: &WindowScores<T>, threshold: T, labels: Option<&[u8]>) -> Result<Self> {
        let flags: Vec<bool> = scores.scores.iter().map(|&s| s >= threshold).collect();
        let metrics = match labels {
            Some(l) => {
                if l.len() != scores.residuals.len() {
                    return Err(Error::shape(
                        "detection",
                        format!("{} labels for {} samples", l.len(), scores.residuals.len()),
                    ));
                }
                let truth: Vec<bool> = l.iter().map(|&v| v == 1).collect();
                Some(detection_metrics(&scores.sample_flags(&flags), &truth)?)
            }
            None => None,
        };
        Ok(Self {
            window: scores.window,
            threshold: threshold.as_f64(),
            scores: scores.scores.iter().map(|s| s.as_f64()).collect(),
            flags,
            metrics,
        })
    }
}
