use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::text::{segment, URL_PLACEHOLDER, USER_PLACEHOLDER};

pub const CLS: &str = "[CLS]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";

pub const CLS_ID: usize = 0;
pub const PAD_ID: usize = 1;
pub const UNK_ID: usize = 2;

pub const SPECIALS: [&str; 5] = [CLS, PAD, UNK, USER_PLACEHOLDER, URL_PLACEHOLDER];

pub const DEFAULT_MIN_FREQ: usize = 2;
pub const DEFAULT_MAX_SIZE: usize = 20_000;

/// Word vocabulary with the five special tokens at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (id, special) in SPECIALS.iter().enumerate() {
            if tokens.get(id).map(String::as_str) != Some(*special) {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary must start with special token {special} at id {id}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Build from normalized texts: tokens seen at least `min_freq` times,
    /// most frequent first (ties alphabetical), at most `max_size` entries in total.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        min_freq: usize,
        max_size: usize,
    ) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for tok in segment(text) {
                *counts.entry(tok.text).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, n)| *n >= min_freq && !SPECIALS.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let room = max_size.saturating_sub(tokens.len());
        tokens.extend(ranked.into_iter().take(room).map(|(t, _)| t.to_owned()));
        Vocab::from_tokens(tokens).expect("specials are placed first")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>id` per line, specials first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{tok}\t{id}");
        }
        out
    }

    pub fn from_tsv(content: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| Error::MalformedRecord {
                line: i + 1,
                message: "expected token<TAB>id".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::MalformedRecord {
                line: i + 1,
                message: format!("bad id {id:?}"),
            })?;
            if id != tokens.len() {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    message: format!("ids must be consecutive, expected {}", tokens.len()),
                });
            }
            tokens.push(tok.to_owned());
        }
        Vocab::from_tokens(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Vocab::from_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_have_fixed_ids() {
        let v = Vocab::build(["a b a b c"], 2, 100);
        assert_eq!(v.id(CLS), Some(0));
        assert_eq!(v.id(PAD), Some(1));
        assert_eq!(v.id(UNK), Some(2));
        assert_eq!(v.id("@USER"), Some(3));
        assert_eq!(v.id("HTTPURL"), Some(4));
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn frequency_order_with_alphabetical_ties() {
        let v = Vocab::build(["z z z a a b b"], 1, 100);
        assert_eq!(&v.tokens()[5..], ["z", "a", "b"]);
    }

    #[test]
    fn cap_applies_to_total_size() {
        let v = Vocab::build(["a a b b c c d d"], 2, 7);
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocab::build(["#ad #ad x x y"], 2, 100);
        let back = Vocab::from_tsv(&v.to_tsv()).unwrap();
        assert_eq!(back, v);
        assert!(v.to_tsv().starts_with("[CLS]\t0\n[PAD]\t1\n"));
    }

    #[test]
    fn tsv_without_specials_is_rejected() {
        assert!(Vocab::from_tsv("hello\t0\n").is_err());
    }
}
