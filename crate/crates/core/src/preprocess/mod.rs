//! Text normalization, tokenization and image tensorization.

mod emoji;
mod image;
mod text;
mod vocab;

pub use self::image::{prepare_image, PixelTensor};
pub use self::text::{normalize_text, segment, Token, URL_PLACEHOLDER, USER_PLACEHOLDER};
pub use self::vocab::{
    Vocab, CLS, CLS_ID, DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQ, PAD, PAD_ID, SPECIALS, UNK, UNK_ID,
};

/// Token strings and vocabulary ids, starting with `[CLS]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sequence from raw ids, with placeholder token strings.
    pub fn from_ids(ids: Vec<usize>) -> Self {
        TokenSeq {
            tokens: ids.iter().map(|i| format!("#{i}")).collect(),
            ids,
        }
    }
}

/// Segment already-normalized text, prepend `[CLS]`, truncate to `max_len`.
/// Out-of-vocabulary tokens map to `[UNK]`.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> TokenSeq {
    let max_len = max_len.max(2);
    let mut tokens = vec![CLS.to_owned()];
    let mut ids = vec![CLS_ID];
    for tok in segment(text).into_iter().take(max_len - 1) {
        ids.push(vocab.id(tok.text).unwrap_or(UNK_ID));
        tokens.push(tok.text.to_owned());
    }
    TokenSeq { tokens, ids }
}

/// Normalize raw post text and tokenize it.
pub fn encode_text(raw: &str, vocab: &Vocab, max_len: usize) -> TokenSeq {
    tokenize(&normalize_text(raw), vocab, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        Vocab::build(["try #ad now try #ad now"], 2, 100)
    }

    #[test]
    fn tokenize_prepends_cls() {
        let seq = tokenize("try #ad now", &vocab(), 128);
        assert_eq!(seq.tokens, [CLS, "try", "#ad", "now"]);
        assert_eq!(seq.ids[0], CLS_ID);
        assert!(seq.ids[1..].iter().all(|&i| i >= SPECIALS.len()));
    }

    #[test]
    fn oov_maps_to_unk_and_truncates() {
        let seq = tokenize("try something else entirely", &vocab(), 3);
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.ids[2], UNK_ID);
    }

    #[test]
    fn unknown_emoji_becomes_unk() {
        let v = vocab();
        let seq = encode_text("try 🦩", &v, 10);
        assert_eq!(seq.ids.last(), Some(&UNK_ID));
    }

    #[test]
    fn id_round_trip_for_regular_tokens() {
        let v = vocab();
        for (id, tok) in v.tokens().iter().enumerate().skip(SPECIALS.len()) {
            assert_eq!(v.id(tok), Some(id));
            assert_eq!(v.token(id), Some(tok.as_str()));
        }
    }

    proptest! {
        #[test]
        fn ids_stay_in_range_and_length_bounded(s in "\\PC{0,80}", max_len in 2usize..20) {
            let v = vocab();
            let seq = encode_text(&s, &v, max_len);
            prop_assert!(seq.len() <= max_len);
            prop_assert_eq!(seq.ids[0], CLS_ID);
            prop_assert!(seq.ids.iter().all(|&i| i < v.len()));
        }
    }
}
