use std::collections::HashMap;

use super::TaskError;

/// Integer id of one vocabulary symbol.
pub type Token = u32;

/// Size of the Count vocabulary, including the four structural symbols.
pub const COUNT_VOCAB_SIZE: usize = 150;

pub const COMMA: &str = ",";
pub const ARROW: &str = ">";
pub const PLUS: &str = "+";
pub const CARRY_HINT: &str = "ac";
pub const SEPARATOR: &str = "<sep>";
pub const PADDING: &str = "<pad>";

/// Bijection between surface symbols and token ids.
///
/// Every value, digit, index hint and punctuation mark is a single token.
/// The separator and padding symbols never appear in the surface form of an
/// example: the separator delimits packed examples and terminates generation,
/// padding fills the tail of a packed row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, Token>,
    comma: Token,
    arrow: Token,
    separator: Token,
    padding: Token,
    plus: Option<Token>,
    carry: Option<Token>,
}

impl Vocab {
    fn from_symbols(symbols: Vec<String>) -> Self {
        let index: HashMap<String, Token> = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as Token))
            .collect();
        assert_eq!(index.len(), symbols.len(), "duplicate vocabulary symbol");
        let id = |s: &str| index.get(s).copied();
        Self {
            comma: id(COMMA).expect("comma"),
            arrow: id(ARROW).expect("arrow"),
            separator: id(SEPARATOR).expect("separator"),
            padding: id(PADDING).expect("padding"),
            plus: id(PLUS),
            carry: id(CARRY_HINT),
            symbols,
            index,
        }
    }

    /// Count vocabulary: the integers `0..=145` followed by `,`, `>`, separator
    /// and padding, for 150 tokens in total. Integer `n` has token id `n`.
    pub fn count() -> Self {
        let numbers = COUNT_VOCAB_SIZE - 4;
        let mut symbols: Vec<String> = (0..numbers).map(|n| n.to_string()).collect();
        symbols.extend([COMMA, ARROW, SEPARATOR, PADDING].map(String::from));
        Self::from_symbols(symbols)
    }

    /// Addition vocabulary: digits `0..=9` (ids equal to the digit), index
    /// hints `a0..a{max_eval_digits-1}`, the carry hint `ac`, then `+`, `>`,
    /// `,`, separator and padding.
    pub fn addition(max_eval_digits: usize) -> Self {
        let mut symbols: Vec<String> = (0..10).map(|d| d.to_string()).collect();
        symbols.extend((0..max_eval_digits).map(|h| format!("a{h}")));
        symbols.extend([CARRY_HINT, PLUS, ARROW, COMMA, SEPARATOR, PADDING].map(String::from));
        Self::from_symbols(symbols)
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn comma(&self) -> Token {
        self.comma
    }

    pub fn arrow(&self) -> Token {
        self.arrow
    }

    pub fn separator(&self) -> Token {
        self.separator
    }

    pub fn padding(&self) -> Token {
        self.padding
    }

    pub fn plus(&self) -> Option<Token> {
        self.plus
    }

    pub fn carry_hint(&self) -> Option<Token> {
        self.carry
    }

    /// Token id of an index hint `a{position}`.
    pub fn hint(&self, position: usize) -> Option<Token> {
        self.index.get(&format!("a{position}")).copied()
    }

    pub fn token(&self, symbol: &str) -> Result<Token, TaskError> {
        self.index
            .get(symbol)
            .copied()
            .ok_or_else(|| TaskError::UnknownSymbol(symbol.to_string()))
    }

    pub fn symbol(&self, token: Token) -> Result<&str, TaskError> {
        self.symbols
            .get(token as usize)
            .map(String::as_str)
            .ok_or(TaskError::UnknownToken(token))
    }

    /// Renders tokens in the comma-separated surface form, e.g.
    /// `5, 9 >, 5, 6, 7`. Commas attach to the preceding symbol; all other
    /// symbols are separated by a single space.
    pub fn render(&self, tokens: &[Token]) -> Result<String, TaskError> {
        let mut out = String::new();
        for (i, &t) in tokens.iter().enumerate() {
            let s = self.symbol(t)?;
            if i > 0 && t != self.comma {
                out.push(' ');
            }
            out.push_str(s);
        }
        Ok(out)
    }

    /// Inverse of [`Vocab::render`].
    pub fn parse(&self, text: &str) -> Result<Vec<Token>, TaskError> {
        let mut tokens = Vec::new();
        for word in text.split_whitespace() {
            let body = word.trim_end_matches(',');
            let commas = word.len() - body.len();
            if !body.is_empty() {
                tokens.push(self.token(body)?);
            }
            tokens.extend(std::iter::repeat_n(self.comma, commas));
        }
        Ok(tokens)
    }
}
