use proptest::prelude::*;
use seedscale::analysis::*;
use seedscale::gradcheck::tiny_config;
use seedscale::metrics::TokenLossProfile;
use seedscale::model::{forward, init_params, rope_rotate, LogitScope};
use seedscale::tasks::{Task, TaskKind, Token};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// W2 by expanding both samples to `lcm(n, m)` equal-weight atoms.
fn w2_by_expansion(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let (ra, rb) = (l / a.len(), l / b.len());
    let total: f64 = (0..l).map(|i| (sa[i / ra] - sb[i / rb]).powi(2)).sum();
    (total / l as f64).sqrt()
}

fn sample(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rope_preserves_norms_and_depends_on_offset_only(
        v in prop::collection::vec(-1.0f64..1.0, 16),
        p in 0usize..200,
        q in 0usize..200,
        shift in 0usize..100,
    ) {
        let (x, y) = (&v[..8], &v[8..]);
        let rx = rope_rotate(x, 8, &[p]).unwrap();
        let norm = |z: &[f64]| z.iter().map(|a| a * a).sum::<f64>();
        prop_assert!((norm(&rx) - norm(x)).abs() < 1e-12);
        let dot = |a: usize, b: usize| {
            let ra = rope_rotate(x, 8, &[a]).unwrap();
            let rb = rope_rotate(y, 8, &[b]).unwrap();
            ra.iter().zip(&rb).map(|(s, t)| s * t).sum::<f64>()
        };
        prop_assert!((dot(p, q) - dot(p + shift, q + shift)).abs() < 1e-9);
    }

    #[test]
    fn w2_matches_expansion_oracle(a in sample(12), b in sample(12)) {
        let got = wasserstein2(&a, &b).unwrap();
        prop_assert!((got - w2_by_expansion(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn w2_metric_axioms(a in sample(10), b in sample(10), c in sample(10), t in -5.0f64..5.0) {
        let ab = wasserstein2(&a, &b).unwrap();
        prop_assert!((ab - wasserstein2(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(wasserstein2(&a, &a).unwrap() < 1e-12);
        let ac = wasserstein2(&a, &c).unwrap();
        let cb = wasserstein2(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
        let shifted: Vec<f64> = a.iter().map(|v| v + t).collect();
        prop_assert!((wasserstein2(&shifted, &a).unwrap() - t.abs()).abs() < 1e-9);
    }

    #[test]
    fn mixture_recombines_to_mean(v in prop::collection::vec(0.0f64..1.0, 1..200), thr in 0.0f64..1.0) {
        let m = mixture_stats(&v, thr);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((m.recombined_mean() - mean).abs() < 1e-12);
        prop_assert!((m.mean_all - mean).abs() < 1e-12);
    }

    #[test]
    fn max_loss_is_log_of_min_prob(
        probs in prop::collection::vec(prop::collection::vec(1e-6f64..1.0, 1..20), 1..20),
    ) {
        let p = TokenLossProfile::from_probs(probs);
        for (l, q) in p.max_losses().iter().zip(p.min_probs()) {
            prop_assert!((l + q.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_scores_ignore_positive_rescaling(y in prop::collection::vec(0.0f64..1.0, 2..10), k in 0.01f64..100.0) {
        let a = ScalingCurve::from_values(y.clone()).unwrap();
        let b = ScalingCurve::from_values(y.iter().map(|v| v * k).collect()).unwrap();
        let (la, lb) = (linearity(&a).unwrap(), linearity(&b).unwrap());
        let (ba, bb) = (breakthroughness(&a).unwrap(), breakthroughness(&b).unwrap());
        prop_assert!(la == lb || (la - lb).abs() < 1e-12 * la.abs().max(1.0));
        prop_assert!(ba == bb || (ba - bb).abs() < 1e-12 * ba.abs().max(1.0));
    }

    #[test]
    fn kde_integrates_to_one(v in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let h = silverman_bandwidth(&v).unwrap();
        let (lo, hi, n) = (-1.0 - 8.0 * h, 2.0 + 8.0 * h, 4001);
        let d = kde(&v, Some(h), (lo, hi, n)).unwrap();
        let step = (hi - lo) / (n - 1) as f64;
        // Trapezoid rule.
        let integral = step * (d.iter().sum::<f64>() - 0.5 * (d[0] + d[n - 1]));
        prop_assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn one_outlier_does_not_make_a_cluster_bimodal(
        center in 0.2f64..0.8,
        jitter in prop::collection::vec(-0.02f64..0.02, 60..100),
        outlier in 0.3f64..1.0,
    ) {
        let mut v: Vec<f64> = jitter.iter().map(|j| center + j).collect();
        let settings = KdeSettings::default();
        prop_assume!(!is_bimodal(&kde_curve(&v, &settings).unwrap(), &settings));
        v.push(center + outlier);
        prop_assert!(!is_bimodal(&kde_curve(&v, &settings).unwrap(), &settings));
    }

    #[test]
    fn bootstrap_is_deterministic(v in prop::collection::vec(0.0f64..1.0, 1..50), seed in 0u64..1000) {
        let s = BootstrapSettings { n_resamples: 50, seed, ..BootstrapSettings::default() };
        let a = bootstrap_ci(&v, Statistic::Mean, &s).unwrap();
        let b = bootstrap_ci(&v, Statistic::Mean, &s).unwrap();
        prop_assert_eq!(a.lo.to_bits(), b.lo.to_bits());
        prop_assert_eq!(a.hi.to_bits(), b.hi.to_bits());
    }

    #[test]
    fn examples_round_trip_through_text(count in any::<bool>(), len in 1usize..30, seed in any::<u64>()) {
        use rand::SeedableRng;
        let kind = if count { TaskKind::Count } else { TaskKind::Addition };
        let task = Task::new(kind, 30);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ex = task.sample(&mut rng, len, len).unwrap();
        let line = task.render(&ex).unwrap();
        prop_assert_eq!(task.parse_line(&line).unwrap(), ex.clone());
        prop_assert_eq!(task.vocab().parse(&line).unwrap(), ex.tokens);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn logits_are_causal(
        tokens in prop::collection::vec(0u32..11, 8),
        cut in 1usize..8,
        replacement in prop::collection::vec(0u32..11, 8),
        seed in 0u64..100,
    ) {
        let cfg = tiny_config();
        let params = init_params::<f64>(&cfg, seed).unwrap();
        let mut changed: Vec<Token> = tokens.clone();
        changed[cut..].copy_from_slice(&replacement[cut..]);
        let a = forward(&params, &tokens, 1, 8, None, LogitScope::All).unwrap().logits;
        let b = forward(&params, &changed, 1, 8, None, LogitScope::All).unwrap().logits;
        let v = cfg.vocab_size;
        prop_assert_eq!(&a[..cut * v], &b[..cut * v]);
    }

    #[test]
    fn rows_are_independent_of_batch_order(
        rows in prop::collection::vec(prop::collection::vec(0u32..11, 8), 2..5),
        seed in 0u64..100,
    ) {
        let cfg = tiny_config();
        let params = init_params::<f64>(&cfg, seed).unwrap();
        let n = rows.len();
        let flat: Vec<Token> = rows.concat();
        let reversed: Vec<Token> = rows.iter().rev().flatten().copied().collect();
        let seq_v = 8 * cfg.vocab_size;
        let a = forward(&params, &flat, n, 8, None, LogitScope::All).unwrap().logits;
        let b = forward(&params, &reversed, n, 8, None, LogitScope::All).unwrap().logits;
        for r in 0..n {
            let (x, y) = (&a[r * seq_v..(r + 1) * seq_v], &b[(n - 1 - r) * seq_v..(n - r) * seq_v]);
            for (p, q) in x.iter().zip(y) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
