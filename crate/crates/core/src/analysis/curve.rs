use serde::Serialize;

use super::{quantile_sorted, sorted, AnalysisError, ScalingCurve};

/// `sign(argmax - argmin) * (max - min)`, taking the first index on ties.
pub fn trend_magnitude(y: &[f64]) -> f64 {
    let (mut imax, mut imin) = (0, 0);
    for (i, &v) in y.iter().enumerate() {
        if v > y[imax] {
            imax = i;
        }
        if v < y[imin] {
            imin = i;
        }
    }
    let sign = (imax as f64 - imin as f64).signum() * (imax != imin) as u8 as f64;
    sign * (y[imax] - y[imin])
}

fn diffs_squared(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).collect()
}

/// `num / den` with `0 / 0 = 0` and a signed infinity for `x / 0`.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            num.signum() * f64::INFINITY
        }
    } else {
        num / den
    }
}

fn check(y: &[f64]) -> Result<(), AnalysisError> {
    if y.len() < 2 {
        return Err(AnalysisError::InvalidArgument("a scaling curve needs at least two points".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite("scaling curve".into()));
    }
    Ok(())
}

/// Trend magnitude over the root-mean-square of consecutive differences.
pub fn linearity(curve: &ScalingCurve) -> Result<f64, AnalysisError> {
    let y = &curve.y;
    check(y)?;
    let sq = diffs_squared(y);
    let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    Ok(ratio(trend_magnitude(y), rms))
}

/// Trend magnitude over the root-median-square of consecutive differences.
/// An even number of differences uses the midpoint of the central pair.
pub fn breakthroughness(curve: &ScalingCurve) -> Result<f64, AnalysisError> {
    let y = &curve.y;
    check(y)?;
    let sq = sorted(&diffs_squared(y));
    let rmeds = quantile_sorted(&sq, 0.5).sqrt();
    Ok(ratio(trend_magnitude(y), rmeds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveScores {
    pub linearity: f64,
    pub breakthroughness: f64,
}

impl CurveScores {
    pub fn of(curve: &ScalingCurve) -> Result<Self, AnalysisError> {
        Ok(Self {
            linearity: linearity(curve)?,
            breakthroughness: breakthroughness(curve)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(y: &[f64]) -> ScalingCurve {
        ScalingCurve::from_values(y.to_vec()).unwrap()
    }

    #[test]
    fn ramp() {
        let r = c(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linearity(&r).unwrap(), 4.0);
        assert_eq!(breakthroughness(&r).unwrap(), 4.0);
    }

    #[test]
    fn step() {
        let s = c(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(linearity(&s).unwrap(), 2.0);
        assert_eq!(breakthroughness(&s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant() {
        let k = c(&[0.3; 4]);
        assert_eq!(linearity(&k).unwrap(), 0.0);
        assert_eq!(breakthroughness(&k).unwrap(), 0.0);
    }

    #[test]
    fn decreasing_is_negative() {
        let d = c(&[1.0, 0.5, 0.0]);
        assert_eq!(trend_magnitude(&d.y), -1.0);
        assert_eq!(linearity(&d).unwrap(), -2.0);
        let drop = c(&[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(breakthroughness(&drop).unwrap(), f64::NEG_INFINITY);
    }
}
