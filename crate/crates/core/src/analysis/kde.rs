use std::f64::consts::PI;

use serde::Serialize;

use super::{check_finite, quantile_sorted, sorted, AnalysisError, PopulationDistribution};

pub const DEFAULT_GRID_POINTS: usize = 512;
/// A valley between two peaks must sit at or below this fraction of the
/// smaller peak for the density to count as bimodal.
pub const VALLEY_RATIO: f64 = 0.8;
/// Peaks lower than this fraction of the tallest are ignored.
pub const MIN_PEAK_RATIO: f64 = 0.1;
/// Bandwidth used when the data have no spread at all.
pub const DEGENERATE_BANDWIDTH: f64 = 1e-3;
/// Automatic bandwidths are floored at this fraction of the data range.
const RANGE_FLOOR: f64 = 1e-4;
/// Automatic grids extend this many bandwidths past the data.
const GRID_PAD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Bandwidth {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `[min - 3h, max + 3h]`.
    Auto { n_points: usize },
    Fixed { lo: f64, hi: f64, n_points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdeSettings {
    pub bandwidth: Bandwidth,
    pub grid: GridSpec,
    pub valley_ratio: f64,
    pub min_peak_ratio: f64,
}

impl Default for KdeSettings {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            grid: GridSpec::Auto {
                n_points: DEFAULT_GRID_POINTS,
            },
            valley_ratio: VALLEY_RATIO,
            min_peak_ratio: MIN_PEAK_RATIO,
        }
    }
}

impl KdeSettings {
    pub fn with_bandwidth(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`, falling back to whichever spread
/// is nonzero, floored at `1e-4` of the range, and [`DEGENERATE_BANDWIDTH`]
/// when all values are equal.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, AnalysisError> {
    check_finite(values, "bandwidth input")?;
    let s = sorted(values);
    let n = s.len() as f64;
    let range = s[s.len() - 1] - s[0];
    if range == 0.0 {
        return Ok(DEGENERATE_BANDWIDTH);
    }
    let m = s.iter().sum::<f64>() / n;
    let sd = if s.len() > 1 {
        (s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let iqr = (quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => range,
    };
    Ok((0.9 * spread * n.powf(-0.2)).max(RANGE_FLOOR * range))
}

fn resolve_bandwidth(values: &[f64], bw: Bandwidth) -> Result<f64, AnalysisError> {
    match bw {
        Bandwidth::Silverman => silverman_bandwidth(values),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
        Bandwidth::Fixed(h) => Err(AnalysisError::InvalidArgument(format!("bandwidth {h} must be positive"))),
    }
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::InvalidArgument("a grid needs at least two points".into()));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(AnalysisError::InvalidArgument(format!("grid [{lo}, {hi}] is empty")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect())
}

fn density_at(values: &[f64], h: f64, x: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    norm * values
        .iter()
        .map(|&v| {
            let z = (x - v) / h;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
}

/// Gaussian KDE on a uniform grid of `n_points` over `[lo, hi]`;
/// `bandwidth = None` uses [`silverman_bandwidth`].
pub fn kde(values: &[f64], bandwidth: Option<f64>, grid: (f64, f64, usize)) -> Result<Vec<f64>, AnalysisError> {
    let settings = KdeSettings {
        bandwidth: bandwidth.map_or(Bandwidth::Silverman, Bandwidth::Fixed),
        grid: GridSpec::Fixed {
            lo: grid.0,
            hi: grid.1,
            n_points: grid.2,
        },
        ..KdeSettings::default()
    };
    Ok(kde_curve(values, &settings)?.density)
}

pub fn kde_curve(values: &[f64], settings: &KdeSettings) -> Result<KdeCurve, AnalysisError> {
    check_finite(values, "KDE input")?;
    let h = resolve_bandwidth(values, settings.bandwidth)?;
    let grid = match settings.grid {
        GridSpec::Auto { n_points } => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            uniform_grid(lo - GRID_PAD * h, hi + GRID_PAD * h, n_points)?
        }
        GridSpec::Fixed { lo, hi, n_points } => uniform_grid(lo, hi, n_points)?,
    };
    let density = grid.iter().map(|&x| density_at(values, h, x)).collect();
    Ok(KdeCurve {
        bandwidth: h,
        grid,
        density,
    })
}

/// Indices of local maxima at least `min_ratio` times the global maximum.
/// A flat top counts once, at its first index; grid endpoints count when
/// the density falls away from them.
pub fn peaks(density: &[f64], min_ratio: f64) -> Vec<usize> {
    let n = density.len();
    let top = density.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && density[j + 1] == density[i] {
            j += 1;
        }
        let left_lower = i == 0 || density[i - 1] < density[i];
        let right_lower = j == n - 1 || density[j + 1] < density[i];
        if left_lower && right_lower && density[i] >= min_ratio * top && n > 1 && !(i == 0 && j == n - 1) {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Whether any two neighbouring qualifying peaks are separated by a valley
/// no higher than `valley_ratio` times the smaller of the two.
pub fn is_bimodal(curve: &KdeCurve, settings: &KdeSettings) -> bool {
    let p = peaks(&curve.density, settings.min_peak_ratio);
    p.windows(2).any(|w| {
        let valley = curve.density[w[0]..=w[1]].iter().copied().fold(f64::INFINITY, f64::min);
        valley <= settings.valley_ratio * curve.density[w[0]].min(curve.density[w[1]])
    })
}

/// Grid location of the KDE maximum; ties go to the lower value.
pub fn mode_estimate(values: &[f64], settings: &KdeSettings) -> Result<f64, AnalysisError> {
    let c = kde_curve(values, settings)?;
    let mut best = 0;
    for (i, &d) in c.density.iter().enumerate() {
        if d > c.density[best] {
            best = i;
        }
    }
    Ok(c.grid[best])
}

/// The first population (in the given scale order) whose KDE is bimodal.
pub fn bimodality_onset(
    populations: &[PopulationDistribution],
    settings: &KdeSettings,
) -> Result<Option<String>, AnalysisError> {
    if populations.is_empty() {
        return Err(AnalysisError::Empty("no populations".into()));
    }
    for p in populations {
        let curve = kde_curve(&p.values, settings)?;
        if is_bimodal(&curve, settings) {
            return Ok(Some(p.scale_label.clone()));
        }
    }
    Ok(None)
}
