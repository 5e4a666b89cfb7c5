use super::{forward, LogitScope, ModelError, Params, Scalar};
use crate::tasks::Token;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Generated continuation, excluding the stop token.
    pub tokens: Vec<Token>,
    /// Whether decoding ended by emitting the stop token.
    pub stopped: bool,
}

/// Argmax decoding of up to `max_new` tokens, ending early at `stop`.
/// `banned` tokens (padding) are never emitted.
pub fn generate_greedy<T: Scalar>(
    params: &Params<T>,
    prompt: &[Token],
    max_new: usize,
    stop: Token,
    banned: &[Token],
) -> Result<Generation, ModelError> {
    let mut out = generate_greedy_batch(params, &[prompt], max_new, stop, banned)?;
    Ok(out.pop().expect("one prompt in, one generation out"))
}

/// Greedy decoding of several prompts of equal length in one batch.
pub fn generate_greedy_batch<T: Scalar>(
    params: &Params<T>,
    prompts: &[&[Token]],
    max_new: usize,
    stop: Token,
    banned: &[Token],
) -> Result<Vec<Generation>, ModelError> {
    let mut results: Vec<Generation> = prompts
        .iter()
        .map(|_| Generation {
            tokens: Vec::new(),
            stopped: false,
        })
        .collect();
    let Some(first) = prompts.first() else {
        return Ok(results);
    };
    let prompt_len = first.len();
    if prompts.iter().any(|p| p.len() != prompt_len) {
        return Err(ModelError::Shape("batched prompts must share a length".into()));
    }
    if prompt_len == 0 {
        return Err(ModelError::Shape("empty prompt".into()));
    }
    let context = params.config.context_length;
    if prompt_len + max_new > context {
        return Err(ModelError::ContextOverflow {
            len: prompt_len + max_new,
            context,
        });
    }
    let v = params.config.vocab_size;

    let mut rows: Vec<Vec<Token>> = prompts.iter().map(|p| p.to_vec()).collect();
    let mut active: Vec<usize> = (0..prompts.len()).collect();
    for _ in 0..max_new {
        if active.is_empty() {
            break;
        }
        let seq = rows[active[0]].len();
        let grid: Vec<Token> = active.iter().flat_map(|&i| rows[i].iter().copied()).collect();
        let out = forward(params, &grid, active.len(), seq, None, LogitScope::Last)?;
        let mut still = Vec::with_capacity(active.len());
        for (slot, &i) in active.iter().enumerate() {
            let logits = &out.logits[slot * v..(slot + 1) * v];
            let next = argmax(logits, banned);
            if next == stop {
                results[i].stopped = true;
            } else {
                results[i].tokens.push(next);
                rows[i].push(next);
                still.push(i);
            }
        }
        active = still;
    }
    Ok(results)
}

/// First maximal index, skipping banned tokens.
fn argmax<T: Scalar>(logits: &[T], banned: &[Token]) -> Token {
    let mut best: Option<(usize, T)> = None;
    for (i, &z) in logits.iter().enumerate() {
        if banned.contains(&(i as Token)) {
            continue;
        }
        if best.is_none_or(|(_, b)| z > b) {
            best = Some((i, z));
        }
    }
    best.expect("vocabulary has an unbanned token").0 as Token
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            depth: 1,
            n_heads: 1,
            head_dim: 8,
            vocab_size: 10,
            context_length: 16,
            mlp_ratio: 4,
        }
    }

    #[test]
    fn zero_budget_is_empty() {
        let p = init_params::<f32>(&cfg(), 0).unwrap();
        let g = generate_greedy(&p, &[1, 2], 0, 9, &[]).unwrap();
        assert!(g.tokens.is_empty());
        assert!(!g.stopped);
    }

    #[test]
    fn repeatable_and_batch_consistent() {
        let p = init_params::<f32>(&cfg(), 1).unwrap();
        let a = generate_greedy(&p, &[1, 2, 3], 10, 9, &[8]).unwrap();
        let b = generate_greedy(&p, &[1, 2, 3], 10, 9, &[8]).unwrap();
        assert_eq!(a, b);
        assert!(!a.tokens.contains(&8));
        let batch = generate_greedy_batch(&p, &[&[4, 4, 4], &[1, 2, 3]], 10, 9, &[8]).unwrap();
        assert_eq!(batch[1], a);
    }

    #[test]
    fn overflow_rejected() {
        let p = init_params::<f32>(&cfg(), 0).unwrap();
        assert!(matches!(
            generate_greedy(&p, &[1; 10], 7, 9, &[]),
            Err(ModelError::ContextOverflow { .. })
        ));
    }
}
