//! Vocabulary and tokenization.
//!
//! Tokenization is deliberately simple: lowercase, then split on anything
//! that is not alphanumeric. Unknown tokens map to the reserved UNK id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Reserved id for the synthetic CLS token prepended by the encoder.
pub const CLS_ID: u32 = 0;
/// Reserved id for out-of-vocabulary tokens.
pub const UNK_ID: u32 = 1;
/// Reserved id for padding (unused by the per-text encoder, kept reserved).
pub const PAD_ID: u32 = 2;

/// Number of reserved ids at the bottom of every vocabulary.
pub const RESERVED: u32 = 3;

/// Token-string to dense-id map with reserved CLS/UNK/PAD slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    // BTreeMap keeps iteration order deterministic.
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    /// Build a vocabulary from a corpus of texts. Tokens are collected with
    /// the same rules used by [`tokenize`], deduplicated and assigned dense
    /// ids in lexicographic order starting after the reserved slots.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = Vec::new();
        for text in texts {
            tokens.extend(split_tokens(text));
        }
        tokens.sort();
        tokens.dedup();
        Self::from_tokens(tokens)
    }

    /// Build from an explicit ordered token list (ids follow list order).
    /// Duplicate tokens keep the first id.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut token_to_id = BTreeMap::new();
        let mut id_to_token = Vec::new();
        for token in tokens {
            let next = RESERVED + id_to_token.len() as u32;
            if let std::collections::btree_map::Entry::Vacant(e) = token_to_id.entry(token.clone())
            {
                e.insert(next);
                id_to_token.push(token);
            }
        }
        Self {
            token_to_id,
            id_to_token,
        }
    }

    /// Total id count including the reserved slots; ids are dense in `[0, len)`.
    pub fn len(&self) -> usize {
        RESERVED as usize + self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Id for a (already normalized) token string; UNK when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Token string for an id, if it names a regular (non-reserved) token.
    pub fn token(&self, id: u32) -> Option<&str> {
        id.checked_sub(RESERVED)
            .and_then(|i| self.id_to_token.get(i as usize))
            .map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// An ordered token-id sequence with the original token strings.
///
/// `len` counts real tokens only; the CLS position the encoder prepends is
/// not part of the sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Lowercase `text` and split it into alphanumeric runs.
pub fn split_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Count tokens without building a [`TokenSeq`].
pub fn count_tokens(text: &str) -> usize {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .count()
}

/// Tokenize `text` against `vocab`. Unknown tokens map to UNK; empty input
/// yields an empty sequence.
pub fn tokenize(text: &str, vocab: &Vocab) -> TokenSeq {
    let tokens = split_tokens(text);
    let ids = tokens.iter().map(|t| vocab.id(t)).collect();
    TokenSeq { ids, tokens }
}
