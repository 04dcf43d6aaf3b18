//! Token identifiers and the built-in synthetic vocabulary.
//!
//! The synthetic vocabulary is laid out densely as
//! `0..=9` digits, `a..=f` variables, `+ - *` operators, `= ; ?` structural
//! tokens, then `STEP`, `ANS`, `PAD` and finally `MASK`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};

/// Dense index into a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u16);

impl TokenId {
    pub const DIGIT_BASE: u16 = 0;
    pub const VAR_BASE: u16 = 10;
    pub const PLUS: TokenId = TokenId(16);
    pub const MINUS: TokenId = TokenId(17);
    pub const TIMES: TokenId = TokenId(18);
    pub const EQ: TokenId = TokenId(19);
    pub const SEMI: TokenId = TokenId(20);
    pub const QUERY: TokenId = TokenId(21);
    pub const STEP: TokenId = TokenId(22);
    pub const ANS: TokenId = TokenId(23);
    pub const PAD: TokenId = TokenId(24);
    pub const MASK: TokenId = TokenId(25);

    /// Digit token for `d` in `0..=9`.
    pub fn digit(d: u8) -> TokenId {
        assert!(d < 10, "digit out of range: {d}");
        TokenId(Self::DIGIT_BASE + d as u16)
    }

    /// Variable token: 0 → `a`, 1 → `b`, … 5 → `f`.
    pub fn var(i: usize) -> TokenId {
        assert!(i < SYNTHETIC_VARS, "variable index out of range: {i}");
        TokenId(Self::VAR_BASE + i as u16)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The digit value when this is a synthetic digit token.
    pub fn as_digit(self) -> Option<u8> {
        (self.0 < 10).then_some(self.0 as u8)
    }

    pub fn is_var(self) -> bool {
        (Self::VAR_BASE..Self::VAR_BASE + SYNTHETIC_VARS as u16).contains(&self.0)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match SYNTHETIC_SYMBOLS.get(self.index()) {
            Some(s) => f.write_str(s),
            None => write!(f, "#{}", self.0),
        }
    }
}

const SYNTHETIC_VARS: usize = 6;

const SYNTHETIC_SYMBOLS: [&str; 26] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "a", "b", "c", "d", "e", "f", "+", "-", "*", "=", ";", "?",
    "STEP", "ANS", "PAD", "[MASK]",
];

/// Number of tokens in the built-in synthetic vocabulary.
pub const SYNTHETIC_VOCAB_SIZE: usize = SYNTHETIC_SYMBOLS.len();

/// An ordered list of distinct symbols with exactly one MASK token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    lookup: HashMap<String, TokenId>,
    mask: TokenId,
}

impl Vocabulary {
    /// The built-in vocabulary used by the chained-arithmetic tasks.
    pub fn synthetic() -> Self {
        Self::from_symbols(SYNTHETIC_SYMBOLS.iter().map(|s| s.to_string()).collect(), "[MASK]")
            .expect("built-in vocabulary is well formed")
    }

    /// A user-supplied vocabulary. `mask_symbol` must occur exactly once.
    pub fn from_symbols(symbols: Vec<String>, mask_symbol: &str) -> Result<Self> {
        if symbols.len() > u16::MAX as usize {
            return Err(IceError::InvalidInput("vocabulary too large".into()));
        }
        let mut lookup = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if lookup.insert(s.clone(), TokenId(i as u16)).is_some() {
                return Err(IceError::InvalidInput(format!("duplicate token {s:?}")));
            }
        }
        let mask = *lookup
            .get(mask_symbol)
            .ok_or_else(|| IceError::InvalidInput(format!("mask token {mask_symbol:?} missing")))?;
        Ok(Self { symbols, lookup, mask })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn mask(&self) -> TokenId {
        self.mask
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id.index()).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.lookup.get(symbol).copied()
    }

    /// Renders a token sequence as space-separated symbols.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens.iter().map(|t| self.symbol(*t).unwrap_or("?")).collect::<Vec<_>>().join(" ")
    }
}
