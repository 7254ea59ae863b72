//! Posts, labels, and the line-record corpus format.
//!
//! A corpus file holds one JSON object per line. Images live next to the corpus
//! file as binary PPM rasters and are referenced by relative path.

mod image;
mod split;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::image::{read_ppm, write_ppm, ImageDir, ImageSource, NoImages, RgbImage};
pub use self::split::{make_text_only_test, split_by_account, SplitName, SplitSpec, DEFAULT_SPLIT_RATIOS};
pub use self::synthetic::{
    generate_synthetic_corpus, SyntheticConfig, SyntheticCorpus, PROMO_CUES, WEAK_CUES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonCommercial,
    Commercial,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NonCommercial, Label::Commercial];

    /// Class index used by the model output layer.
    pub fn index(self) -> usize {
        match self {
            Label::NonCommercial => 0,
            Label::Commercial => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::NonCommercial),
            1 => Some(Label::Commercial),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonCommercial => "non_commercial",
            Label::Commercial => "commercial",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "non_commercial" | "nc" => Some(Label::NonCommercial),
            "commercial" | "c" => Some(Label::Commercial),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Beauty,
    Travel,
    Fitness,
    Food,
    Tech,
    Lifestyle,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::Beauty,
        Domain::Travel,
        Domain::Fitness,
        Domain::Food,
        Domain::Tech,
        Domain::Lifestyle,
    ];
}

/// One social-media item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub account_id: String,
    pub domain: Domain,
    pub text: String,
    /// Path of the image file, relative to the corpus directory.
    pub image: Option<String>,
    pub weak_label: Option<Label>,
    pub gold_label: Option<Label>,
    #[serde(default)]
    pub matched_keywords: Vec<String>,
}

impl Post {
    pub fn has_image(&self) -> bool {
        self.image.is_some()
    }
}

/// Parse a corpus from its line-record text. Blank lines are skipped.
pub fn parse_corpus(content: &str) -> Result<Vec<Post>> {
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let post: Post = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(post.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: post.id,
            });
        }
        posts.push(post);
    }
    Ok(posts)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Post>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut content = String::new();
    for line in BufReader::new(file).lines() {
        content.push_str(&line.map_err(|e| Error::io(path, e))?);
        content.push('\n');
    }
    parse_corpus(&content)
}

pub fn corpus_to_string(posts: &[Post]) -> Result<String> {
    let mut out = String::new();
    for post in posts {
        out.push_str(&serde_json::to_string(post)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_corpus(path: impl AsRef<Path>, posts: &[Post]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus_to_string(posts)?.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","account_id":"a1","domain":"beauty","text":"hello","image":null,"weak_label":null,"gold_label":"commercial","matched_keywords":[]}}"#
        )
    }

    #[test]
    fn loads_two_records_in_order() {
        let content = format!("{}\n{}\n", record("p1"), record("p2"));
        let posts = parse_corpus(&content).unwrap();
        assert_eq!(posts.len(), 2);
        assert_eq!(posts[0].id, "p1");
        assert_eq!(posts[1].id, "p2");
        assert_eq!(posts[0].gold_label, Some(Label::Commercial));
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        assert!(parse_corpus("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_reports_line() {
        let lines: Vec<String> = ["p1", "p2", "p3", "p4", "p2"].iter().map(|i| record(i)).collect();
        let err = parse_corpus(&lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate id at line 5"), "{err}");
    }

    #[test]
    fn malformed_record_reports_line() {
        let content = format!("{}\n{{not json\n", record("p1"));
        match parse_corpus(&content).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let posts = parse_corpus(&format!("{}\n{}\n", record("a"), record("b"))).unwrap();
        save_corpus(&path, &posts).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), posts);
    }
}
