//! Count and Addition task generation, tokenization and context packing.
//!
//! All generators are pure functions of their arguments and the random
//! stream they are handed, so two calls with identically seeded streams
//! produce bit-identical examples.

mod addition;
mod count;
mod pack;
mod vocab;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use addition::AdditionTask;
pub use count::CountTask;
pub use pack::{PackedBatch, Span};
pub use vocab::{Token, Vocab, COUNT_VOCAB_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("invalid length range: {0}")]
    InvalidRange(String),
    #[error("context length {context} cannot hold an example of {needed} tokens")]
    ContextTooShort { context: usize, needed: usize },
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(Token),
    #[error("malformed example: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Count,
    Addition,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Count => "count",
            TaskKind::Addition => "addition",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(TaskKind::Count),
            "addition" => Ok(TaskKind::Addition),
            other => Err(TaskError::UnknownSymbol(other.to_string())),
        }
    }
}

/// One task instance: prompt tokens followed by answer tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<Token>,
    /// Index of the first answer token.
    pub answer_start: usize,
    pub task_kind: TaskKind,
    /// Counting-sequence length for Count, operand digit count for Addition.
    pub logical_length: usize,
}

impl Example {
    pub fn prompt(&self) -> &[Token] {
        &self.tokens[..self.answer_start]
    }

    pub fn answer(&self) -> &[Token] {
        &self.tokens[self.answer_start..]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// How Count evaluation sets are built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountEvalMode {
    /// `n_items` examples with uniformly sampled start values.
    Sampled,
    /// Every consecutive run of the test length that fits the vocabulary,
    /// one example per start value; `n_items` is ignored.
    #[default]
    AllWindows,
}

/// A task generator bound to its vocabulary.
#[derive(Debug, Clone)]
pub enum Task {
    Count(CountTask),
    Addition(AdditionTask),
}

impl Task {
    /// Builds the generator for `kind`. `max_eval_length` sizes the Addition
    /// index-hint alphabet and is ignored for Count.
    pub fn new(kind: TaskKind, max_eval_length: usize) -> Self {
        match kind {
            TaskKind::Count => Task::Count(CountTask::new()),
            TaskKind::Addition => Task::Addition(AdditionTask::new(max_eval_length)),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Count(_) => TaskKind::Count,
            Task::Addition(_) => TaskKind::Addition,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            Task::Count(t) => t.vocab(),
            Task::Addition(t) => t.vocab(),
        }
    }

    /// Largest logical length the generator accepts.
    pub fn max_logical_length(&self) -> usize {
        match self {
            Task::Count(t) => t.max_length(),
            Task::Addition(t) => t.max_eval_digits(),
        }
    }

    /// Number of tokens of the longest example at `logical_length`.
    pub fn max_tokens(&self, logical_length: usize) -> usize {
        match self {
            Task::Count(_) => CountTask::tokens_for_length(logical_length),
            Task::Addition(_) => AdditionTask::max_tokens_for_digits(logical_length),
        }
    }

    /// Samples one example with logical length uniform in `[min_len, max_len]`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        min_len: usize,
        max_len: usize,
    ) -> Result<Example, TaskError> {
        match self {
            Task::Count(t) => t.generate(rng, min_len, max_len),
            Task::Addition(t) => {
                if min_len == 0 || min_len > max_len {
                    return Err(TaskError::InvalidRange(format!(
                        "digit range [{min_len}, {max_len}]"
                    )));
                }
                let digits = rng.random_range(min_len..=max_len);
                t.generate(rng, digits)
            }
        }
    }

    /// Evaluation examples, all at logical length `test_length`.
    pub fn eval_set<R: Rng + ?Sized>(
        &self,
        test_length: usize,
        n_items: usize,
        mode: CountEvalMode,
        rng: &mut R,
    ) -> Result<Vec<Example>, TaskError> {
        if let (Task::Count(t), CountEvalMode::AllWindows) = (self, mode) {
            return t.all_windows(test_length);
        }
        if n_items == 0 {
            return Err(TaskError::InvalidRange("evaluation set must be nonempty".into()));
        }
        (0..n_items)
            .map(|_| self.sample(rng, test_length, test_length))
            .collect()
    }

    /// Renders an example as one line of surface text.
    pub fn render(&self, example: &Example) -> Result<String, TaskError> {
        self.vocab().render(&example.tokens)
    }

    /// Re-tokenizes one surface line and locates its answer span.
    pub fn parse_line(&self, line: &str) -> Result<Example, TaskError> {
        let vocab = self.vocab();
        let tokens = vocab.parse(line)?;
        let arrow = tokens
            .iter()
            .position(|&t| t == vocab.arrow())
            .ok_or_else(|| TaskError::Malformed(format!("no '>' in {line:?}")))?;
        let answer_start = arrow + 2;
        if tokens.get(arrow + 1) != Some(&vocab.comma()) || answer_start >= tokens.len() {
            return Err(TaskError::Malformed(format!("empty answer in {line:?}")));
        }
        let logical_length = match self {
            // prompt is `a , b > ,`; answer has one number per logical step
            Task::Count(_) => (tokens.len() - answer_start).div_ceil(2),
            // each operand is `hint , digit ,` per digit
            Task::Addition(_) => {
                let plus = vocab.plus().expect("addition vocab has '+'");
                let p = tokens
                    .iter()
                    .position(|&t| t == plus)
                    .ok_or_else(|| TaskError::Malformed(format!("no '+' in {line:?}")))?;
                p / 4
            }
        };
        Ok(Example {
            tokens,
            answer_start,
            task_kind: self.kind(),
            logical_length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_line_recovers_structure() {
        let task = Task::new(TaskKind::Addition, 8);
        let ex = task
            .parse_line("a0, 3, a1, 4, +, a0, 2, a1, 8, >, a1, 2, a0, 6")
            .unwrap();
        assert_eq!(ex.logical_length, 2);
        assert_eq!(ex.answer().len(), 7);

        let task = Task::new(TaskKind::Count, 0);
        let ex = task.parse_line("5, 9 >, 5, 6, 7, 8, 9").unwrap();
        assert_eq!(ex.logical_length, 5);
        assert_eq!(ex.answer_start, 5);
    }

    #[test]
    fn eval_set_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let count = Task::new(TaskKind::Count, 0);
        let set = count.eval_set(60, 10, CountEvalMode::Sampled, &mut rng).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.iter().all(|e| e.logical_length == 60));

        let add = Task::new(TaskKind::Addition, 40);
        let set = add.eval_set(40, 10, CountEvalMode::Sampled, &mut rng).unwrap();
        assert!(set.iter().all(|e| e.logical_length == 40));

        let one = count.eval_set(1, 1, CountEvalMode::Sampled, &mut rng).unwrap();
        let text = count.render(&one[0]).unwrap();
        let parts: Vec<&str> = text.split(' ').collect();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[0].trim_end_matches(','), parts[1]);
        assert_eq!(parts[1], parts[3]);

        assert!(count.eval_set(5, 0, CountEvalMode::Sampled, &mut rng).is_err());
    }

    #[test]
    fn all_windows_enumerates_every_start() {
        let count = Task::new(TaskKind::Count, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = count.eval_set(60, 1, CountEvalMode::AllWindows, &mut rng).unwrap();
        assert_eq!(set.len(), 146 - 60 + 1);
        assert_eq!(set[0].tokens[0], 0);
        assert_eq!(set.last().unwrap().tokens[2], 145);
    }
}
