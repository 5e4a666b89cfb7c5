use serde::Serialize;

use super::mean;
use crate::tasks::TaskKind;

/// Exact-match accuracy above which an addition run counts as a success.
pub const ADDITION_THRESHOLD: f64 = 0.20;
/// Exact-match accuracy above which a count run counts as a success.
pub const COUNT_THRESHOLD: f64 = 0.50;

pub fn default_threshold(task: TaskKind) -> f64 {
    match task {
        TaskKind::Addition => ADDITION_THRESHOLD,
        TaskKind::Count => COUNT_THRESHOLD,
    }
}

/// A population split into successes (strictly above the threshold) and
/// failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureStats {
    pub threshold: f64,
    pub p_success: f64,
    pub mean_success: Option<f64>,
    pub mean_fail: Option<f64>,
    pub mean_all: f64,
}

impl MixtureStats {
    /// `p * mean_success + (1 - p) * mean_fail`, treating an empty component
    /// as contributing nothing.
    pub fn recombined_mean(&self) -> f64 {
        let p = self.p_success;
        p * self.mean_success.unwrap_or(0.0) + (1.0 - p) * self.mean_fail.unwrap_or(0.0)
    }
}

/// Mixture decomposition of `values`; an empty input yields NaN means.
pub fn mixture_stats(values: &[f64], threshold: f64) -> MixtureStats {
    let (succ, fail): (Vec<f64>, Vec<f64>) = values.iter().partition(|&&v| v > threshold);
    let nonempty_mean = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
    MixtureStats {
        threshold,
        p_success: succ.len() as f64 / values.len() as f64,
        mean_success: nonempty_mean(&succ),
        mean_fail: nonempty_mean(&fail),
        mean_all: mean(values),
    }
}
