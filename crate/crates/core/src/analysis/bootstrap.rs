use rand::Rng;
use serde::Serialize;

use super::{check_finite, mean, quantile_sorted, AnalysisError};
use crate::seeding::{self, Stream};

/// A population statistic that can be bootstrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    /// Fraction of values strictly above `threshold`.
    PSuccess { threshold: f64 },
    /// Mean of the values strictly above `threshold`; undefined when none are.
    MeanSuccess { threshold: f64 },
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::PSuccess { .. } => "p_success",
            Self::MeanSuccess { .. } => "mean_success",
        }
    }

    pub fn eval(&self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        match *self {
            Self::Mean => Some(mean(values)),
            Self::PSuccess { threshold } => {
                Some(values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64)
            }
            Self::MeanSuccess { threshold } => {
                let (sum, n) = values
                    .iter()
                    .filter(|&&v| v > threshold)
                    .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
                (n > 0).then(|| sum / n as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSettings {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Extra draws allowed, in total, to replace resamples on which the
    /// statistic is undefined.
    pub max_redraws: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            level: 0.95,
            seed: 0,
            max_redraws: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Resamples that were redrawn because the statistic was undefined.
    pub redraws: usize,
}

/// Percentile bootstrap interval for `statistic` over `values`.
pub fn bootstrap_ci(values: &[f64], statistic: Statistic, settings: &BootstrapSettings) -> Result<Interval, AnalysisError> {
    check_finite(values, "bootstrap input")?;
    if settings.n_resamples == 0 {
        return Err(AnalysisError::InvalidArgument("n_resamples must be at least 1".into()));
    }
    if !(settings.level > 0.0 && settings.level < 1.0) {
        return Err(AnalysisError::InvalidArgument(format!("level {} is not in (0, 1)", settings.level)));
    }
    if statistic.eval(values).is_none() {
        return Err(AnalysisError::Undefined(format!("the full sample ({})", statistic.name())));
    }
    let mut rng = seeding::stream(settings.seed, Stream::Bootstrap);
    let n = values.len();
    let mut resample = vec![0.0; n];
    let mut stats = Vec::with_capacity(settings.n_resamples);
    let mut redraws = 0;
    while stats.len() < settings.n_resamples {
        for x in resample.iter_mut() {
            *x = values[rng.random_range(0..n)];
        }
        match statistic.eval(&resample) {
            Some(s) => stats.push(s),
            None => {
                redraws += 1;
                if redraws > settings.max_redraws {
                    return Err(AnalysisError::Undefined(format!(
                        "more than {} resamples ({})",
                        settings.max_redraws,
                        statistic.name()
                    )));
                }
            }
        }
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - settings.level) / 2.0;
    Ok(Interval {
        lo: quantile_sorted(&stats, tail),
        hi: quantile_sorted(&stats, 1.0 - tail),
        redraws,
    })
}
