use seedscale::gradcheck::{check_gradients, random_batch, run_default_suite, GradCheckSettings};
use seedscale::model::{init_params, ModelConfig};

#[test]
fn depth_one_width_eight_matches_finite_differences() {
    for report in run_default_suite(&[0, 1, 2]).unwrap() {
        for t in &report.tensors {
            assert_eq!(t.failures, 0, "{} max rel {:e}", t.name, t.max_rel_error);
        }
    }
}

#[test]
fn deeper_stack_matches_finite_differences() {
    let cfg = ModelConfig {
        depth: 2,
        n_heads: 1,
        head_dim: 8,
        vocab_size: 9,
        context_length: 7,
        mlp_ratio: 2,
    };
    let params = init_params::<f64>(&cfg, 11).unwrap();
    let batch = random_batch(&cfg, 3, 7, 11);
    let report = check_gradients(&params, &batch, GradCheckSettings::default()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.entries(), cfg.param_count());
}
