use rand::Rng;

use super::{Example, TaskError, TaskKind, Token, Vocab};

/// Reverse-order addition with index hints.
///
/// Operands are fixed-width, most significant digit first, each digit tagged
/// with a hint from a consecutive run `a{h}..a{h+n-1}`. The answer lists the
/// sum's digits least significant first, each tagged with its operand hint.
/// When the sum overflows the operand width the extra leading digit is
/// emitted last and tagged with the dedicated carry hint `ac`.
#[derive(Debug, Clone)]
pub struct AdditionTask {
    vocab: Vocab,
    max_eval_digits: usize,
}

impl AdditionTask {
    pub fn new(max_eval_digits: usize) -> Self {
        Self {
            vocab: Vocab::addition(max_eval_digits),
            max_eval_digits,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn max_eval_digits(&self) -> usize {
        self.max_eval_digits
    }

    /// Token count with a carry digit: `6n + 4` symbols joined by commas.
    pub fn max_tokens_for_digits(digits: usize) -> usize {
        12 * digits + 7
    }

    /// Builds the example for explicit operand digits (most significant
    /// first) and hint offset.
    pub fn example(&self, lhs: &[u8], rhs: &[u8], hint_start: usize) -> Result<Example, TaskError> {
        let n = lhs.len();
        if n == 0 || rhs.len() != n {
            return Err(TaskError::InvalidRange(format!(
                "operands must share a nonzero width, got {} and {}",
                lhs.len(),
                rhs.len()
            )));
        }
        if lhs.iter().chain(rhs).any(|&d| d > 9) {
            return Err(TaskError::InvalidRange("operand digit above 9".into()));
        }
        if hint_start + n > self.max_eval_digits {
            return Err(TaskError::InvalidRange(format!(
                "hints a{hint_start}..a{} exceed the {} available",
                hint_start + n - 1,
                self.max_eval_digits
            )));
        }
        let hint = |i: usize| self.vocab.hint(hint_start + i).expect("hint in range");
        let mut symbols: Vec<Token> = Vec::with_capacity(6 * n + 4);
        for (i, &d) in lhs.iter().enumerate() {
            symbols.extend([hint(i), d as Token]);
        }
        symbols.push(self.vocab.plus().expect("addition vocab"));
        for (i, &d) in rhs.iter().enumerate() {
            symbols.extend([hint(i), d as Token]);
        }
        symbols.push(self.vocab.arrow());
        let answer_symbol_start = symbols.len();

        let mut carry = 0u8;
        for i in (0..n).rev() {
            let s = lhs[i] + rhs[i] + carry;
            symbols.extend([hint(i), (s % 10) as Token]);
            carry = s / 10;
        }
        if carry > 0 {
            symbols.extend([self.vocab.carry_hint().expect("addition vocab"), carry as Token]);
        }

        let comma = self.vocab.comma();
        let mut tokens = Vec::with_capacity(2 * symbols.len());
        let mut answer_start = 0;
        for (i, s) in symbols.into_iter().enumerate() {
            if i > 0 {
                tokens.push(comma);
            }
            if i == answer_symbol_start {
                answer_start = tokens.len();
            }
            tokens.push(s);
        }
        Ok(Example {
            tokens,
            answer_start,
            task_kind: TaskKind::Addition,
            logical_length: n,
        })
    }

    /// Samples uniform operand digits (leading zeros allowed) and a hint
    /// offset uniform over the positions keeping the run inside
    /// `[0, max_eval_digits)`.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R, num_digits: usize) -> Result<Example, TaskError> {
        if num_digits == 0 || num_digits > self.max_eval_digits {
            return Err(TaskError::InvalidRange(format!(
                "{num_digits} digits with max evaluation length {}",
                self.max_eval_digits
            )));
        }
        let lhs: Vec<u8> = (0..num_digits).map(|_| rng.random_range(0..10)).collect();
        let rhs: Vec<u8> = (0..num_digits).map(|_| rng.random_range(0..10)).collect();
        let hint_start = rng.random_range(0..=self.max_eval_digits - num_digits);
        self.example(&lhs, &rhs, hint_start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn literal_example() {
        let task = AdditionTask::new(40);
        let ex = task.example(&[3, 4], &[2, 8], 0).unwrap();
        assert_eq!(
            task.vocab().render(&ex.tokens).unwrap(),
            "a0, 3, a1, 4, +, a0, 2, a1, 8, >, a1, 2, a0, 6"
        );
        assert_eq!(task.vocab().render(ex.answer()).unwrap(), "a1, 2, a0, 6");
    }

    #[test]
    fn zero_sum() {
        let task = AdditionTask::new(4);
        let ex = task.example(&[0], &[0], 2).unwrap();
        assert_eq!(task.vocab().render(ex.answer()).unwrap(), "a2, 0");
    }

    #[test]
    fn carry_out_uses_carry_hint() {
        let task = AdditionTask::new(4);
        let ex = task.example(&[9, 9], &[0, 1], 1).unwrap();
        assert_eq!(task.vocab().render(ex.answer()).unwrap(), "a2, 0, a1, 0, ac, 1");
        assert_eq!(ex.len(), AdditionTask::max_tokens_for_digits(2));
    }

    #[test]
    fn range_errors() {
        let task = AdditionTask::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(task.generate(&mut rng, 6).is_err());
        assert!(task.generate(&mut rng, 0).is_err());
        assert!(task.example(&[1, 2], &[3, 4], 4).is_err());
        for _ in 0..100 {
            let ex = task.generate(&mut rng, 5).unwrap();
            // the full hint run must start at a0
            assert_eq!(ex.tokens[0], task.vocab().hint(0).unwrap());
        }
    }
}
