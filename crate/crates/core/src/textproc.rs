//! Tokenization, n-gram counting and subgraph linearization.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Subgraph;

pub const DEFAULT_SEPARATOR: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidN(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizeConfig {
    pub lowercase: bool,
    pub strip_punct: bool,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        TokenizeConfig {
            lowercase: true,
            strip_punct: true,
        }
    }
}

impl TokenizeConfig {
    /// Whitespace splitting only.
    pub fn strict() -> Self {
        TokenizeConfig {
            lowercase: false,
            strip_punct: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Builds a sequence from pre-split tokens, dropping any that are empty or
    /// carry whitespace.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSeq(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty() && !t.chars().any(char::is_whitespace))
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

pub type TokenSet = BTreeSet<String>;

fn keep_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

pub fn tokenize(text: &str, config: &TokenizeConfig) -> TokenSeq {
    let normalized: String = text.nfc().collect();
    let cased = if config.lowercase {
        normalized.to_lowercase().nfc().collect()
    } else {
        normalized
    };
    let cleaned: String = if config.strip_punct {
        cased.chars().map(|c| if keep_char(c) { c } else { ' ' }).collect()
    } else {
        cased
    };
    TokenSeq(cleaned.split_whitespace().map(str::to_owned).collect())
}

pub fn tokenize_default(text: &str) -> TokenSeq {
    tokenize(text, &TokenizeConfig::default())
}

pub fn token_set(seq: &TokenSeq) -> TokenSet {
    seq.0.iter().cloned().collect()
}

/// Multiset of contiguous n-token windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramBag {
    n: usize,
    counts: HashMap<Vec<String>, usize>,
    total: usize,
}

impl NGramBag {
    pub fn empty(n: usize) -> Result<Self, TextError> {
        if n == 0 {
            return Err(TextError::InvalidN(n));
        }
        Ok(NGramBag {
            n,
            counts: HashMap::new(),
            total: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn unique(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], usize)> {
        self.counts.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Adds the windows of `seq`; windows never span two added sequences.
    pub fn extend_from(&mut self, seq: &TokenSeq) {
        for w in seq.0.windows(self.n) {
            *self.counts.entry(w.to_vec()).or_insert(0) += 1;
            self.total += 1;
        }
    }
}

pub fn ngrams(seq: &TokenSeq, n: usize) -> Result<NGramBag, TextError> {
    let mut bag = NGramBag::empty(n)?;
    bag.extend_from(seq);
    Ok(bag)
}

/// Renders each triplet as `head relation tail` and joins them with
/// ` <separator> `.
pub fn linearize(subgraph: &Subgraph, separator: &str) -> String {
    let parts: Vec<String> = subgraph
        .triplets
        .iter()
        .map(|t| format!("{} {} {}", t.head, t.relation, t.tail))
        .collect();
    parts.join(&format!(" {separator} "))
}
