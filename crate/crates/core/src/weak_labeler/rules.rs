use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::segment;

/// Disclosure keyword taxonomy: 26 entries over four business models.
pub const DEFAULT_RULES_TSV: &str = "\
#ad\tguidelines\thashtag
ad\tguidelines\tword
#advert\tguidelines\thashtag
#collab\tguidelines\thashtag
collab\tguidelines\tword
#spon\tguidelines\thashtag
#sponsored\tguidelines\thashtag
spon\tguidelines\tword
#sp\tguidelines\thashtag
sponsored\tguidelines\tword
thanks to\tguidelines\tbrand_phrase
funded by\tguidelines\tbrand_phrase
supported by\tguidelines\tbrand_phrase
in association with\tguidelines\tbrand_phrase
#ambassador\tendorsement\thashtag
ambassador\tendorsement\tword
#gift\tbarter\thashtag
gift\tbarter\tword
#giveaway\tbarter\thashtag
giveaway\tbarter\tword
unpaid sample\tbarter\tphrase
#aff\taffiliate\thashtag
aff\taffiliate\tword
#affiliate\taffiliate\thashtag
affiliate\taffiliate\tword
discount code\taffiliate\tphrase
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Guidelines,
    Endorsement,
    Barter,
    Affiliate,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Guidelines,
        Category::Endorsement,
        Category::Barter,
        Category::Affiliate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Guidelines => "guidelines",
            Category::Endorsement => "endorsement",
            Category::Barter => "barter",
            Category::Affiliate => "affiliate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Hashtag,
    Word,
    Phrase,
    /// Phrase that only counts when an @-mention follows within three tokens.
    BrandPhrase,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Hashtag => "hashtag",
            RuleKind::Word => "word",
            RuleKind::Phrase => "phrase",
            RuleKind::BrandPhrase => "brand_phrase",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            RuleKind::Hashtag,
            RuleKind::Word,
            RuleKind::Phrase,
            RuleKind::BrandPhrase,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub surface: String,
    pub category: Category,
    pub kind: RuleKind,
}

impl KeywordRule {
    pub fn new(surface: &str, category: Category, kind: RuleKind) -> Result<Self> {
        let surface = surface.trim().to_lowercase();
        let n_tokens = segment(&surface).len();
        let ok = match kind {
            RuleKind::Hashtag => surface.starts_with('#') && n_tokens == 1,
            RuleKind::Word => n_tokens == 1 && !surface.starts_with('#'),
            RuleKind::Phrase | RuleKind::BrandPhrase => n_tokens >= 1,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "rule {surface:?} is not a valid {} rule",
                kind.as_str()
            )));
        }
        Ok(KeywordRule {
            surface,
            category,
            kind,
        })
    }
}

/// Compiled, immutable rule set. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<KeywordRule>,
    patterns: Vec<Vec<String>>,
}

impl RuleSet {
    pub fn new(rules: Vec<KeywordRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::InvalidArgument("rule set must not be empty".into()));
        }
        let patterns = rules
            .iter()
            .map(|r| segment(&r.surface).iter().map(|t| t.text.to_owned()).collect())
            .collect();
        Ok(RuleSet { rules, patterns })
    }

    /// Parse `surface<TAB>category<TAB>kind` lines. Blank lines and lines
    /// starting with `//` are ignored.
    pub fn from_tsv(content: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with("//") {
                continue;
            }
            let bad = |message: String| Error::MalformedRecord {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [surface, category, kind] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let category =
                Category::parse(category).ok_or_else(|| bad(format!("unknown category {category:?}")))?;
            let kind = RuleKind::parse(kind).ok_or_else(|| bad(format!("unknown kind {kind:?}")))?;
            rules.push(KeywordRule::new(surface, category, kind).map_err(|e| bad(e.to_string()))?);
        }
        RuleSet::new(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        RuleSet::from_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn rules(&self) -> &[KeywordRule] {
        &self.rules
    }

    pub(crate) fn patterns(&self) -> impl Iterator<Item = (&KeywordRule, &[String])> {
        self.rules.iter().zip(self.patterns.iter().map(Vec::as_slice))
    }

    pub fn category_of(&self, surface: &str) -> Option<Category> {
        self.rules
            .iter()
            .find(|r| r.surface == surface)
            .map(|r| r.category)
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::from_tsv(DEFAULT_RULES_TSV).expect("built-in rule table is valid")
    }
}
