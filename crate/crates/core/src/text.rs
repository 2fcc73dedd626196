//! Tokenization. The token stream must be identical at training and
//! classification time, so the settings travel with the model file.

use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Word tokenizer: lowercase and split on any non-alphanumeric character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Lowercase tokens before counting and lookup.
    #[serde(default = "default_lowercase")]
    pub lowercase: bool,
    /// Drop tokens shorter than this many characters.
    #[serde(default = "default_min_token_len")]
    pub min_token_len: usize,
}

fn default_lowercase() -> bool {
    true
}

fn default_min_token_len() -> usize {
    1
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_token_len: 1,
        }
    }
}

impl TokenizerConfig {
    /// Byte ranges of the tokens of `text`, in order. A token is a maximal
    /// run of alphanumeric characters with at least `min_token_len` chars.
    pub fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut chars_in_run = 0usize;
        for (idx, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if start.is_none() {
                    start = Some(idx);
                    chars_in_run = 0;
                }
                chars_in_run += 1;
            } else if let Some(s) = start.take() {
                if chars_in_run >= self.min_token_len {
                    spans.push(s..idx);
                }
            }
        }
        if let Some(s) = start {
            if chars_in_run >= self.min_token_len {
                spans.push(s..text.len());
            }
        }
        spans
    }

    /// Normalized form of a raw token slice.
    pub fn normalize(&self, raw: &str) -> String {
        if self.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        }
    }

    /// Normalized tokens of `text`, in order.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        self.token_spans(text)
            .into_iter()
            .map(|span| self.normalize(&text[span]))
            .collect()
    }
}
