//! Recursive text splitting under a token cap.
//!
//! Documents are cut on the coarsest delimiter first — paragraph breaks,
//! then line breaks, then sentence boundaries, then spaces, then single
//! characters — and the resulting pieces are greedily merged back together
//! up to the cap. Delimiters stay attached to the piece they terminate, so
//! concatenating the chunks reproduces the source document byte for byte.

use treble_core::vocab::count_tokens;

use crate::category::ClinicalCategory;

/// Delimiters from coarsest to finest; past the last one we fall back to
/// character-level pieces.
const DELIMITERS: [&str; 4] = ["\n\n", "\n", ". ", " "];

/// Default chunk cap, sized for a full-scale encoder. Desk-scale encoders
/// have much shorter sequence budgets; pass an explicit cap instead.
pub const DEFAULT_MAX_TOKENS: usize = 1500;

/// One indexed piece of a patient's note.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub patient_id: String,
    pub category: ClinicalCategory,
    /// Position within this patient's documents for `category`, from 0.
    pub seq: usize,
    pub text: String,
    pub token_count: usize,
    /// Dense embedding exactly as stored in the patient's index.
    pub embedding: Vec<f32>,
}

impl Chunk {
    /// The unique chunk id, e.g. `patient42_CurrentMeds_chunk3`.
    pub fn id(&self) -> String {
        format!("{}_{}_chunk{}", self.patient_id, self.category, self.seq)
    }
}

/// Split `text` into chunks of at most `max_tokens` tokens each.
///
/// Splits on the coarsest delimiter that brings every piece under the cap,
/// recursing to finer delimiters (and ultimately single characters) only
/// for oversized pieces, then greedily merges adjacent pieces while the
/// combined piece stays within the cap. Empty input yields no chunks.
///
/// # Panics
/// If `max_tokens` is zero.
pub fn split_text(text: &str, max_tokens: usize) -> Vec<String> {
    assert!(max_tokens >= 1, "max_tokens must be at least 1");
    if text.is_empty() {
        return Vec::new();
    }
    let mut pieces = Vec::new();
    split_into(text, max_tokens, 0, &mut pieces);
    merge(pieces, max_tokens)
}

/// Cut `text` into pieces of at most `max_tokens` tokens, trying delimiter
/// `level` first and finer levels only where needed.
fn split_into(text: &str, max_tokens: usize, level: usize, out: &mut Vec<String>) {
    if count_tokens(text) <= max_tokens {
        out.push(text.to_string());
        return;
    }
    if level == DELIMITERS.len() {
        // A single scalar is at most one token, so these pieces always fit.
        out.extend(text.chars().map(String::from));
        return;
    }
    let delim = DELIMITERS[level];
    let parts: Vec<&str> = text.split_inclusive(delim).collect();
    if parts.len() == 1 {
        split_into(text, max_tokens, level + 1, out);
        return;
    }
    for part in parts {
        split_into(part, max_tokens, level + 1, out);
    }
}

/// Greedily concatenate adjacent pieces while the result stays within the
/// cap. Pieces arrive in document order and each already fits on its own.
fn merge(pieces: Vec<String>, max_tokens: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut acc = String::new();
    let mut acc_tokens = 0;
    for piece in pieces {
        let piece_tokens = count_tokens(&piece);
        if acc.is_empty() {
            acc = piece;
            acc_tokens = piece_tokens;
            continue;
        }
        // Token runs can fuse across the join (e.g. "ab" + "cd" is one
        // token), so the sum only bounds the joined count from above; when
        // the bound alone would overflow, append and recount for real.
        if acc_tokens + piece_tokens <= max_tokens {
            acc.push_str(&piece);
            acc_tokens += piece_tokens;
            continue;
        }
        acc.push_str(&piece);
        let joined_tokens = count_tokens(&acc);
        if joined_tokens <= max_tokens {
            acc_tokens = joined_tokens;
            continue;
        }
        acc.truncate(acc.len() - piece.len());
        chunks.push(std::mem::replace(&mut acc, piece));
        acc_tokens = piece_tokens;
    }
    if !acc.is_empty() {
        chunks.push(acc);
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn join(chunks: &[String]) -> String {
        chunks.concat()
    }

    #[test]
    fn short_text_is_a_single_chunk_equal_to_the_input() {
        let text = "one two three four five six seven eight nine ten";
        assert_eq!(split_text(text, 1500), vec![text.to_string()]);
    }

    #[test]
    fn six_tokens_cap_two_gives_three_chunks_of_two() {
        let chunks = split_text("a b c d e f", 2);
        assert_eq!(chunks.len(), 3);
        for c in &chunks {
            assert_eq!(count_tokens(c), 2);
        }
        assert_eq!(join(&chunks), "a b c d e f");
    }

    #[test]
    fn oversized_pair_of_paragraphs_splits_at_the_paragraph_boundary() {
        let text = "alpha beta gamma\n\ndelta epsilon zeta";
        let chunks = split_text(text, 4);
        assert_eq!(
            chunks,
            vec!["alpha beta gamma\n\n".to_string(), "delta epsilon zeta".to_string()]
        );
    }

    #[test]
    fn paragraphs_merge_when_they_fit_together() {
        let text = "alpha beta\n\ngamma delta";
        assert_eq!(split_text(text, 4), vec![text.to_string()]);
    }

    #[test]
    fn falls_back_to_sentences_then_spaces() {
        let text = "one two three. four five six. seven eight nine";
        let chunks = split_text(text, 3);
        assert_eq!(
            chunks,
            vec![
                "one two three. ".to_string(),
                "four five six. ".to_string(),
                "seven eight nine".to_string()
            ]
        );
        let finer = split_text("one two three four", 1);
        assert_eq!(finer.len(), 4);
        assert_eq!(join(&finer), "one two three four");
    }

    #[test]
    fn punctuation_heavy_single_word_reaches_character_level() {
        // No spaces anywhere, but each letter is its own token.
        let text = "a.b.c.d.e.f";
        let chunks = split_text(text, 2);
        assert!(chunks.len() >= 3, "{chunks:?}");
        for c in &chunks {
            assert!(count_tokens(c) <= 2, "{c:?}");
        }
        assert_eq!(join(&chunks), text);
    }

    #[test]
    fn empty_input_yields_zero_chunks() {
        assert!(split_text("", 10).is_empty());
    }

    #[test]
    fn whitespace_only_input_is_one_zero_token_chunk() {
        let chunks = split_text("  \n\n  ", 10);
        assert_eq!(join(&chunks), "  \n\n  ");
        assert!(chunks.iter().all(|c| count_tokens(c) == 0));
    }

    #[test]
    fn token_fusion_across_joins_is_recounted() {
        // "ab" and "cd" fuse into one token when concatenated directly.
        let text = "abcdefgh";
        let chunks = split_text(text, 1);
        assert_eq!(chunks, vec![text.to_string()]);
    }

    #[test]
    #[should_panic(expected = "max_tokens")]
    fn zero_cap_is_rejected() {
        split_text("a", 0);
    }

    #[test]
    fn chunk_id_renders_patient_category_and_sequence() {
        let chunk = Chunk {
            patient_id: "patient42".into(),
            category: ClinicalCategory::CurrentMeds,
            seq: 123,
            text: String::new(),
            token_count: 0,
            embedding: Vec::new(),
        };
        assert_eq!(chunk.id(), "patient42_CurrentMeds_chunk123");
    }
}
