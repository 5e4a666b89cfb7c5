use super::{check_finite, sorted, AnalysisError, PopulationDistribution, ScalingCurve};

/// W2 distance between two empirical distributions on the real line.
///
/// Both quantile functions are step functions, constant on
/// `((i-1)/n, i/n]`; the squared difference is integrated exactly over the
/// merged breakpoints, which are compared in integer arithmetic.
pub fn wasserstein2(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    check_finite(a, "first sample")?;
    check_finite(b, "second sample")?;
    let (sa, sb) = (sorted(a), sorted(b));
    let (n, m) = (sa.len() as u128, sb.len() as u128);
    // Breakpoints in units of 1 / (n m): a steps every m units, b every n.
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0u128;
    let mut total = 0.0;
    let end = n * m;
    while pos < end {
        let next_a = (i as u128 + 1) * m;
        let next_b = (j as u128 + 1) * n;
        let next = next_a.min(next_b);
        let d = sa[i] - sb[j];
        total += d * d * (next - pos) as f64;
        pos = next;
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
    }
    Ok((total / end as f64).sqrt())
}

/// W2 of each population against the last (largest-scale) one.
pub fn wasserstein_drift(populations: &[PopulationDistribution]) -> Result<ScalingCurve, AnalysisError> {
    if populations.len() < 2 {
        return Err(AnalysisError::InvalidArgument("drift needs at least two populations".into()));
    }
    let last = &populations[populations.len() - 1];
    for p in populations {
        if p.metric_name != last.metric_name || p.eval_length != last.eval_length || p.task_kind != last.task_kind {
            return Err(AnalysisError::Mismatch(format!(
                "metric: {} at length {} versus {} at length {}",
                p.metric_name, p.eval_length, last.metric_name, last.eval_length
            )));
        }
    }
    let y = populations
        .iter()
        .map(|p| wasserstein2(&p.values, &last.values))
        .collect::<Result<Vec<_>, _>>()?;
    ScalingCurve::new(
        populations.iter().map(|p| p.scale_label.clone()).collect(),
        populations.iter().map(|p| p.param_count).collect(),
        y,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_cases() {
        assert_eq!(wasserstein2(&[0.3, 0.1], &[0.1, 0.3]).unwrap(), 0.0);
        assert_eq!(wasserstein2(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein2(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn unequal_sizes_hand_value() {
        // Quantiles: a = 0 on (0, 1]; b = 0 on (0, 1/2], 1 on (1/2, 1].
        assert!((wasserstein2(&[0.0], &[0.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        // a = [0, 3] vs b = [0, 1, 2]: squared gaps 0, 1, 4, 1 on pieces of
        // length 1/3, 1/6, 1/6, 1/3.
        let expect = (1.0 / 6.0 + 4.0 / 6.0 + 1.0 / 3.0f64).sqrt();
        assert!((wasserstein2(&[0.0, 3.0], &[0.0, 1.0, 2.0]).unwrap() - expect).abs() < 1e-15);
    }
}
