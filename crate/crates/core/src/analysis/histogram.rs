use serde::Serialize;

use super::{check_finite, AnalysisError};

/// Bin count for exact-match histograms over `[0, 1]`.
pub const EM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramRange {
    Fixed(f64, f64),
    /// `[min, max]` of the data, widened by 0.5 on each side when constant.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram. Bins are half-open except the last, which also
/// holds the upper edge; values outside a fixed range are dropped.
pub fn histogram(values: &[f64], bins: usize, range: HistogramRange) -> Result<Histogram, AnalysisError> {
    check_finite(values, "histogram input")?;
    if bins == 0 {
        return Err(AnalysisError::InvalidArgument("at least one bin is required".into()));
    }
    let (lo, hi) = match range {
        HistogramRange::Fixed(lo, hi) => {
            if !(lo < hi) {
                return Err(AnalysisError::InvalidArgument(format!("empty range [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        HistogramRange::Data => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn em_bins() {
        let h = histogram(&[0.0, 0.04, 0.05, 0.5, 1.0, 1.0], EM_BINS, HistogramRange::Fixed(0.0, 1.0)).unwrap();
        assert_eq!(h.edges.len(), 21);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts[19], 2);
        assert_eq!(h.counts.iter().sum::<usize>(), 6);
    }

    #[test]
    fn data_range() {
        let h = histogram(&[2.0, 2.0], 4, HistogramRange::Data).unwrap();
        assert_eq!(h.edges[0], 1.5);
        assert_eq!(h.counts.iter().sum::<usize>(), 2);
    }
}
