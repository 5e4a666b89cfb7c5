//! Per-model evaluation metrics.
//!
//! Exact match is scored on greedy generations. The three continuous metrics
//! are scored teacher-forced: every token is predicted from the correct
//! preceding context, so the metric is a fixed function of the logits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{forward, generate_greedy_batch, log_sum_exp, LogitScope, ModelError, Params, Scalar};
use crate::tasks::{Example, Task};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-30;

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("evaluation set is empty")]
    EmptySet,
    #[error("example {0} has no scored positions")]
    EmptyExample(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which positions of an example the continuous metrics range over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringScope {
    /// Answer tokens only.
    #[default]
    AnswerOnly,
    /// Every predictable position: the prompt after its first token, then
    /// the answer.
    FullExample,
}

/// Per-token probabilities and losses of each evaluated example.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLossProfile {
    pub probs: Vec<Vec<f64>>,
    pub losses: Vec<Vec<f64>>,
}

impl TokenLossProfile {
    /// Builds a profile from per-token probabilities; losses are
    /// `-ln(max(p, PROB_FLOOR))`.
    pub fn from_probs(probs: Vec<Vec<f64>>) -> Self {
        let probs: Vec<Vec<f64>> = probs
            .into_iter()
            .map(|ex| ex.into_iter().map(|p| p.clamp(PROB_FLOOR, 1.0)).collect())
            .collect();
        let losses = probs.iter().map(|ex| ex.iter().map(|p| -p.ln()).collect()).collect();
        Self { probs, losses }
    }

    /// Builds a profile from per-token losses; probabilities are `exp(-loss)`.
    pub fn from_losses(losses: Vec<Vec<f64>>) -> Self {
        let probs = losses
            .iter()
            .map(|ex| ex.iter().map(|l| (-l).exp().max(PROB_FLOOR)).collect())
            .collect();
        Self { probs, losses }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    fn check(&self) -> Result<(), MetricError> {
        if self.losses.is_empty() {
            return Err(MetricError::EmptySet);
        }
        match self.losses.iter().position(Vec::is_empty) {
            Some(i) => Err(MetricError::EmptyExample(i)),
            None => Ok(()),
        }
    }

    /// Largest per-token loss of each example.
    pub fn max_losses(&self) -> Vec<f64> {
        self.losses.iter().map(|ex| ex.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    /// Smallest per-token probability of each example.
    pub fn min_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|ex| ex.iter().copied().fold(f64::INFINITY, f64::min)).collect()
    }
}

/// Mean over examples of the largest per-token loss.
pub fn continuous_error(profile: &TokenLossProfile) -> Result<f64, MetricError> {
    profile.check()?;
    let m = profile.max_losses();
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

/// Mean over examples of the smallest per-token probability.
pub fn min_prob(profile: &TokenLossProfile) -> Result<f64, MetricError> {
    profile.check()?;
    let m = profile.min_probs();
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

/// Mean per-token loss, pooled over all scored positions of all examples.
pub fn mean_nll(profile: &TokenLossProfile) -> Result<f64, MetricError> {
    profile.check()?;
    let (sum, n) = profile
        .losses
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), &l| (s + l, n + 1));
    Ok(sum / n as f64)
}

/// Indices of `examples` grouped by `key`, in first-seen order.
fn group_by<F: Fn(&Example) -> usize>(examples: &[Example], key: F) -> Vec<Vec<usize>> {
    let mut keys: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let k = key(ex);
        match keys.iter().position(|&x| x == k) {
            Some(g) => groups[g].push(i),
            None => {
                keys.push(k);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Fraction of examples whose greedy continuation of the prompt is exactly
/// the answer followed by the separator.
pub fn exact_match<T: Scalar>(params: &Params<T>, task: &Task, eval_set: &[Example]) -> Result<f64, MetricError> {
    if eval_set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let vocab = task.vocab();
    let banned = [vocab.padding()];
    let mut hits = 0usize;
    for group in group_by(eval_set, |e| e.answer_start) {
        for chunk in group.chunks(EVAL_CHUNK) {
            let prompts: Vec<&[_]> = chunk.iter().map(|&i| eval_set[i].prompt()).collect();
            let max_new = chunk.iter().map(|&i| eval_set[i].answer().len()).max().unwrap_or(0) + 1;
            let gens = generate_greedy_batch(params, &prompts, max_new, vocab.separator(), &banned)?;
            hits += chunk
                .iter()
                .zip(&gens)
                .filter(|(&i, g)| g.stopped && g.tokens == eval_set[i].answer())
                .count();
        }
    }
    Ok(hits as f64 / eval_set.len() as f64)
}

/// Teacher-forced per-token probabilities over the scored positions.
pub fn token_loss_profile<T: Scalar>(
    params: &Params<T>,
    eval_set: &[Example],
    scope: ScoringScope,
) -> Result<TokenLossProfile, MetricError> {
    if eval_set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let v = params.config.vocab_size;
    let mut probs: Vec<Vec<f64>> = vec![Vec::new(); eval_set.len()];
    for group in group_by(eval_set, |e| e.len()) {
        for chunk in group.chunks(EVAL_CHUNK) {
            let seq = eval_set[chunk[0]].len();
            let mut grid = Vec::with_capacity(chunk.len() * seq);
            for &i in chunk {
                grid.extend_from_slice(&eval_set[i].tokens);
            }
            let out = forward(params, &grid, chunk.len(), seq, None, LogitScope::All)?;
            for (row, &i) in chunk.iter().enumerate() {
                let ex = &eval_set[i];
                let first = match scope {
                    ScoringScope::AnswerOnly => ex.answer_start,
                    ScoringScope::FullExample => 1,
                };
                probs[i] = (first..ex.len())
                    .map(|pos| {
                        let r = row * seq + pos - 1;
                        let logits = &out.logits[r * v..(r + 1) * v];
                        let lse = log_sum_exp(logits);
                        let lp = logits[ex.tokens[pos] as usize] - lse;
                        lp.to_f64().expect("finite").exp()
                    })
                    .collect();
            }
        }
    }
    Ok(TokenLossProfile::from_probs(probs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthMetrics {
    pub em: f64,
    pub continuous_error: f64,
    pub min_prob: f64,
    pub mean_nll: f64,
}

/// All four metrics on one evaluation set.
pub fn evaluate<T: Scalar>(
    params: &Params<T>,
    task: &Task,
    eval_set: &[Example],
    scope: ScoringScope,
) -> Result<LengthMetrics, MetricError> {
    let profile = token_loss_profile(params, eval_set, scope)?;
    Ok(LengthMetrics {
        em: exact_match(params, task, eval_set)?,
        continuous_error: continuous_error(&profile)?,
        min_prob: min_prob(&profile)?,
        mean_nll: mean_nll(&profile)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_continuous_error() {
        let p = TokenLossProfile::from_losses(vec![vec![0.1, 0.5], vec![0.2, 0.3]]);
        assert_eq!(continuous_error(&p).unwrap(), 0.4);
    }

    #[test]
    fn worked_min_prob() {
        let p = TokenLossProfile::from_probs(vec![vec![0.9, 0.4], vec![0.8, 0.6]]);
        assert!((min_prob(&p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let p = TokenLossProfile::from_probs(vec![vec![1.0; 4]; 3]);
        assert_eq!(continuous_error(&p).unwrap(), 0.0);
        assert_eq!(min_prob(&p).unwrap(), 1.0);
        assert_eq!(mean_nll(&p).unwrap(), 0.0);
    }

    #[test]
    fn uniform_predictions() {
        let v = 150.0f64;
        let p = TokenLossProfile::from_probs(vec![vec![1.0 / v; 5]; 2]);
        assert!((mean_nll(&p).unwrap() - v.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_mean_nll() {
        let p = TokenLossProfile::from_losses(vec![vec![1.0, 2.0], vec![3.0], vec![0.5, 0.5, 2.0]]);
        assert!((mean_nll(&p).unwrap() - 9.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_inputs_error() {
        let none = TokenLossProfile::from_losses(vec![]);
        assert_eq!(continuous_error(&none), Err(MetricError::EmptySet));
        let hollow = TokenLossProfile::from_losses(vec![vec![0.1], vec![]]);
        assert_eq!(min_prob(&hollow), Err(MetricError::EmptyExample(1)));
        assert_eq!(mean_nll(&hollow), Err(MetricError::EmptyExample(1)));
    }

    #[test]
    fn floor_keeps_losses_finite() {
        let p = TokenLossProfile::from_probs(vec![vec![0.0, 0.5]]);
        assert!(continuous_error(&p).unwrap().is_finite());
        assert!((continuous_error(&p).unwrap() + PROB_FLOOR.ln()).abs() < 1e-9);
    }
}
