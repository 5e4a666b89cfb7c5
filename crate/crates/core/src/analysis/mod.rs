//! Population-level analytics over per-seed metric values.
//!
//! Every function here is pure. Inputs are populations (one value per seed
//! at one scale) or scaling curves (one value per scale).

mod bootstrap;
mod curve;
mod histogram;
mod kde;
mod mixture;
mod population;
mod wasserstein;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, BootstrapSettings, Interval, Statistic};
pub use curve::{breakthroughness, linearity, trend_magnitude, CurveScores};
pub use histogram::{histogram, Histogram, HistogramRange, EM_BINS};
pub use kde::{
    bimodality_onset, is_bimodal, kde, kde_curve, mode_estimate, peaks, silverman_bandwidth, Bandwidth, GridSpec,
    KdeCurve, KdeSettings, DEFAULT_GRID_POINTS, DEGENERATE_BANDWIDTH, VALLEY_RATIO,
};
pub use mixture::{default_threshold, mixture_stats, MixtureStats, ADDITION_THRESHOLD, COUNT_THRESHOLD};
pub use population::{ingest_run_records, ingest_run_records_from, populations_from_records, PopulationDistribution, ScalingCurve};
pub use wasserstein::{wasserstein2, wasserstein_drift};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("populations disagree on {0}")]
    Mismatch(String),
    #[error("duplicate seed {seed} at scale {scale}")]
    DuplicateSeed { scale: String, seed: u64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("statistic is undefined on {0}")]
    Undefined(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Arithmetic mean, accumulated relative to the first value so that a
/// constant input returns that constant exactly.
pub(crate) fn mean(values: &[f64]) -> f64 {
    let Some(&base) = values.first() else {
        return f64::NAN;
    };
    base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<(), AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty(what.to_string()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite(format!("{what} contains {v}")));
    }
    Ok(())
}
