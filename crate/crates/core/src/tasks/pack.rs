use rand::Rng;

use super::{Example, Task, TaskError, Token};

/// Location of one example inside a packed row. `end` is exclusive; the
/// separator token, when present, sits at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub answer_start: usize,
    pub end: usize,
}

/// A `batch_size x context_length` grid of whole examples.
///
/// Rows read `ex1 <sep> ex2 <sep> ... exk <pad>...`. `loss_mask[r][t]` is
/// set when the prediction of token `t + 1` from position `t` is trained,
/// which is every position whose successor is not padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBatch {
    pub batch_size: usize,
    pub context_length: usize,
    /// Row-major token ids.
    pub tokens: Vec<Token>,
    /// Row-major, aligned with `tokens`.
    pub loss_mask: Vec<bool>,
    pub boundaries: Vec<Vec<Span>>,
}

impl PackedBatch {
    pub fn row(&self, r: usize) -> &[Token] {
        &self.tokens[r * self.context_length..(r + 1) * self.context_length]
    }

    pub fn row_mask(&self, r: usize) -> &[bool] {
        &self.loss_mask[r * self.context_length..(r + 1) * self.context_length]
    }

    /// Greedily packs freshly sampled examples with logical lengths uniform
    /// in `length_range` into each row until the next one would overflow.
    pub fn sample<R: Rng + ?Sized>(
        task: &Task,
        rng: &mut R,
        length_range: (usize, usize),
        batch_size: usize,
        context_length: usize,
    ) -> Result<Self, TaskError> {
        let needed = task.max_tokens(length_range.1);
        if needed > context_length {
            return Err(TaskError::ContextTooShort {
                context: context_length,
                needed,
            });
        }
        let mut batch = PackedBatch {
            batch_size,
            context_length,
            tokens: Vec::with_capacity(batch_size * context_length),
            loss_mask: Vec::with_capacity(batch_size * context_length),
            boundaries: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let (row, spans) = pack_row(task, rng, length_range, context_length)?;
            let used = spans.last().map_or(0, |s| s.end);
            batch.tokens.extend_from_slice(&row);
            batch.loss_mask.extend((0..context_length).map(|t| t + 1 < used));
            batch.boundaries.push(spans);
        }
        Ok(batch)
    }

    /// A single-row batch holding exactly the given examples.
    pub fn from_examples(task: &Task, examples: &[Example], context_length: usize) -> Result<Self, TaskError> {
        let vocab = task.vocab();
        let mut row = Vec::with_capacity(context_length);
        let mut spans = Vec::new();
        for ex in examples {
            if !row.is_empty() {
                row.push(vocab.separator());
            }
            let start = row.len();
            row.extend_from_slice(&ex.tokens);
            spans.push(Span {
                start,
                answer_start: start + ex.answer_start,
                end: row.len(),
            });
        }
        if row.len() > context_length {
            return Err(TaskError::ContextTooShort {
                context: context_length,
                needed: row.len(),
            });
        }
        let used = row.len();
        row.resize(context_length, vocab.padding());
        Ok(PackedBatch {
            batch_size: 1,
            context_length,
            loss_mask: (0..context_length).map(|t| t + 1 < used).collect(),
            tokens: row,
            boundaries: vec![spans],
        })
    }
}

fn pack_row<R: Rng + ?Sized>(
    task: &Task,
    rng: &mut R,
    (min_len, max_len): (usize, usize),
    context_length: usize,
) -> Result<(Vec<Token>, Vec<Span>), TaskError> {
    let vocab = task.vocab();
    let mut row: Vec<Token> = Vec::with_capacity(context_length);
    let mut spans = Vec::new();
    loop {
        let ex = task.sample(rng, min_len, max_len)?;
        let sep = usize::from(!row.is_empty());
        if row.len() + sep + ex.len() > context_length {
            if row.is_empty() {
                return Err(TaskError::ContextTooShort {
                    context: context_length,
                    needed: ex.len(),
                });
            }
            break;
        }
        if sep == 1 {
            row.push(vocab.separator());
        }
        let start = row.len();
        row.extend_from_slice(&ex.tokens);
        spans.push(Span {
            start,
            answer_start: start + ex.answer_start,
            end: row.len(),
        });
        if row.len() == context_length {
            break;
        }
    }
    row.resize(context_length, vocab.padding());
    Ok((row, spans))
}
