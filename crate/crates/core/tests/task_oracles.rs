//! Generated examples checked against an independent re-derivation from
//! their surface text.

mod common;

use common::{check_addition_line, check_count_line};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seedscale::tasks::{AdditionTask, CountTask, Task, TaskKind};

#[test]
fn literal_examples_byte_for_byte() {
    let count = CountTask::new();
    let ex = count.example(5, 9).unwrap();
    assert_eq!(count.vocab().render(&ex.tokens).unwrap(), "5, 9 >, 5, 6, 7, 8, 9");
    let add = AdditionTask::new(35);
    let ex = add.example(&[3, 4], &[2, 8], 0).unwrap();
    assert_eq!(
        add.vocab().render(&ex.tokens).unwrap(),
        "a0, 3, a1, 4, +, a0, 2, a1, 8, >, a1, 2, a0, 6"
    );
}

#[test]
fn fuzzed_count_examples_match_oracle() {
    let task = Task::new(TaskKind::Count, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let ex = task.sample(&mut rng, 1, 60).unwrap();
        let line = task.render(&ex).unwrap();
        let len = check_count_line(&line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert_eq!(len, ex.logical_length);
        assert_eq!(task.parse_line(&line).unwrap(), ex);
    }
}

#[test]
fn fuzzed_addition_examples_match_oracle() {
    let max_eval = 40;
    let task = Task::new(TaskKind::Addition, max_eval);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let ex = task.sample(&mut rng, 1, max_eval).unwrap();
        let line = task.render(&ex).unwrap();
        let n = check_addition_line(&line, max_eval).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert_eq!(n, ex.logical_length);
        assert_eq!(task.parse_line(&line).unwrap(), ex);
    }
}

#[test]
fn oracles_reject_corruptions() {
    assert!(check_count_line("5, 9 >, 5, 6, 7, 9").is_err());
    assert!(check_count_line("9, 5 >, 9").is_err());
    assert!(check_addition_line("a0, 3, a1, 4, +, a0, 2, a1, 8, >, a1, 2, a0, 7", 35).is_err());
    assert!(check_addition_line("a0, 9, +, a0, 9, >, a0, 8", 35).is_err());
    assert_eq!(check_addition_line("a0, 9, +, a0, 9, >, a0, 8, ac, 1", 35), Ok(1));
}

/// Pearson chi-square statistic of observed counts against a uniform law.
fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

#[test]
fn training_lengths_are_uniform() {
    // 0.999 quantile of chi-square with 9 degrees of freedom.
    const CRITICAL_DF9: f64 = 27.877;
    for kind in [TaskKind::Count, TaskKind::Addition] {
        let task = Task::new(kind, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut counts = [0usize; 10];
        for _ in 0..20_000 {
            counts[task.sample(&mut rng, 1, 10).unwrap().logical_length - 1] += 1;
        }
        let stat = chi_square_uniform(&counts);
        assert!(stat < CRITICAL_DF9, "{kind}: chi-square {stat} for {counts:?}");
    }
}
