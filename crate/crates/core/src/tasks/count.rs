use rand::Rng;

use super::{Example, TaskError, TaskKind, Token, Vocab};

/// Count task: given `a, b >,` produce `a, a+1, ..., b`.
#[derive(Debug, Clone)]
pub struct CountTask {
    vocab: Vocab,
    numeric_max: usize,
}

impl Default for CountTask {
    fn default() -> Self {
        Self::new()
    }
}

impl CountTask {
    pub fn new() -> Self {
        let vocab = Vocab::count();
        // the four structural symbols follow the integers
        let numeric_max = vocab.size() - 5;
        Self { vocab, numeric_max }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Largest integer with its own token.
    pub fn numeric_max(&self) -> usize {
        self.numeric_max
    }

    /// Longest counting sequence the vocabulary can express.
    pub fn max_length(&self) -> usize {
        self.numeric_max + 1
    }

    /// `a , b > ,` plus `2L - 1` answer tokens.
    pub fn tokens_for_length(length: usize) -> usize {
        2 * length + 4
    }

    /// The example counting from `start` to `end` inclusive.
    pub fn example(&self, start: usize, end: usize) -> Result<Example, TaskError> {
        if start > end || end > self.numeric_max {
            return Err(TaskError::InvalidRange(format!(
                "count from {start} to {end} with numeric max {}",
                self.numeric_max
            )));
        }
        let comma = self.vocab.comma();
        let length = end - start + 1;
        let mut tokens: Vec<Token> = Vec::with_capacity(Self::tokens_for_length(length));
        tokens.extend([start as Token, comma, end as Token, self.vocab.arrow(), comma]);
        let answer_start = tokens.len();
        for (i, n) in (start..=end).enumerate() {
            if i > 0 {
                tokens.push(comma);
            }
            tokens.push(n as Token);
        }
        Ok(Example {
            tokens,
            answer_start,
            task_kind: TaskKind::Count,
            logical_length: length,
        })
    }

    /// Samples a length uniformly in `[min_len, max_len]`, then a start value
    /// uniformly among those whose run stays inside the vocabulary.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        min_len: usize,
        max_len: usize,
    ) -> Result<Example, TaskError> {
        if min_len == 0 || min_len > max_len || max_len > self.max_length() {
            return Err(TaskError::InvalidRange(format!(
                "count lengths [{min_len}, {max_len}] with numeric max {}",
                self.numeric_max
            )));
        }
        let length = rng.random_range(min_len..=max_len);
        let start = rng.random_range(0..=self.numeric_max + 1 - length);
        self.example(start, start + length - 1)
    }

    pub fn all_windows(&self, length: usize) -> Result<Vec<Example>, TaskError> {
        if length == 0 || length > self.max_length() {
            return Err(TaskError::InvalidRange(format!("window length {length}")));
        }
        (0..=self.numeric_max + 1 - length)
            .map(|start| self.example(start, start + length - 1))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn literal_example() {
        let task = CountTask::new();
        let ex = task.example(5, 9).unwrap();
        assert_eq!(task.vocab().render(&ex.tokens).unwrap(), "5, 9 >, 5, 6, 7, 8, 9");
        assert_eq!(ex.logical_length, 5);
        assert_eq!(task.vocab().render(ex.answer()).unwrap(), "5, 6, 7, 8, 9");
    }

    #[test]
    fn single_element_count() {
        let task = CountTask::new();
        let ex = task.example(3, 3).unwrap();
        assert_eq!(task.vocab().render(&ex.tokens).unwrap(), "3, 3 >, 3");
        assert_eq!(ex.len(), CountTask::tokens_for_length(1));
    }

    #[test]
    fn rejects_ranges_beyond_vocab() {
        let task = CountTask::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(task.generate(&mut rng, 1, 147).is_err());
        assert!(task.generate(&mut rng, 0, 3).is_err());
        assert!(task.generate(&mut rng, 4, 3).is_err());
        assert!(task.example(140, 146).is_err());
        assert!(task.generate(&mut rng, 146, 146).is_ok());
    }

    #[test]
    fn deterministic_under_seed() {
        let task = CountTask::new();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| task.generate(&mut rng, 1, 30).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }
}
