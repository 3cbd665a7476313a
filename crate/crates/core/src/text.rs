//! Shared text handling: tokenization for metrics and the mock embedder,
//! the stopword list, and the normalization used for memory deduplication.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const STOPWORDS_V1: &str = include_str!("../assets/stopwords.v1.txt");

/// Lowercase tokens of a text. Never contains an empty token.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    /// Builds a sequence from already-split tokens, lowercasing them and
    /// dropping empties.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            tokens: tokens
                .into_iter()
                .map(|t| t.as_ref().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Copy of the sequence with stopwords removed.
    pub fn without_stopwords(&self) -> Self {
        let stop = stopwords();
        Self {
            tokens: self
                .tokens
                .iter()
                .filter(|t| !stop.contains(t.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from every token. Internal punctuation (`it's`, `co-op`) is kept.
pub fn tokenize(text: &str) -> TokenSequence {
    let tokens = text
        .split_whitespace()
        .map(|raw| {
            raw.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect();
    TokenSequence { tokens }
}

/// The 127-word English stopword list shipped with the crate.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_V1
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Case-folded, whitespace-collapsed form used to detect duplicate memories.
pub fn normalize_for_dedup(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
