//! Layered settings: built-in defaults, then a `key=value` file, then flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use crosscue::corpus::SyntheticConfig;
use crosscue::model::ModelConfig;
use crosscue::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Generator settings; mirrors `SyntheticConfig`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSettings {
    pub seed: u64,
    pub n_accounts: usize,
    pub posts_per_account: usize,
    pub commercial_rate: f64,
    pub text_only_per_account: usize,
    pub text_only_commercial_rate: f64,
    pub undisclosed_rate: f64,
    pub keyword_false_positive_rate: f64,
    pub image_size: usize,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        SyntheticConfig::new(7, 10, 200, 0.5).into()
    }
}

impl From<SyntheticConfig> for CorpusSettings {
    fn from(c: SyntheticConfig) -> Self {
        CorpusSettings {
            seed: c.seed,
            n_accounts: c.n_accounts,
            posts_per_account: c.posts_per_account,
            commercial_rate: c.commercial_rate,
            text_only_per_account: c.text_only_per_account,
            text_only_commercial_rate: c.text_only_commercial_rate,
            undisclosed_rate: c.undisclosed_rate,
            keyword_false_positive_rate: c.keyword_false_positive_rate,
            image_size: c.image_size,
        }
    }
}

impl CorpusSettings {
    pub fn to_synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            n_accounts: self.n_accounts,
            posts_per_account: self.posts_per_account,
            commercial_rate: self.commercial_rate,
            text_only_per_account: self.text_only_per_account,
            text_only_commercial_rate: self.text_only_commercial_rate,
            undisclosed_rate: self.undisclosed_rate,
            keyword_false_positive_rate: self.keyword_false_positive_rate,
            image_size: self.image_size,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    pub corpus: CorpusSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

type Sections = BTreeMap<String, Map<String, Value>>;

/// Parse `[section]` headers and `key=value` lines. `#` starts a comment line.
/// Values are read as JSON scalars when possible, strings otherwise; an empty
/// value means null.
pub fn parse_sections(content: &str) -> Result<Sections> {
    let mut sections = Sections::new();
    let mut current: Option<String> = None;
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {raw:?}", idx + 1);
        };
        let Some(section) = &current else {
            bail!("line {}: key {:?} outside of a [section]", idx + 1, key.trim());
        };
        let value = value.trim();
        let value = if value.is_empty() {
            Value::Null
        } else {
            serde_json::from_str::<Value>(value)
                .ok()
                .filter(|v| !v.is_object() && !v.is_array())
                .unwrap_or_else(|| Value::String(value.to_string()))
        };
        sections
            .get_mut(section)
            .expect("section inserted on header")
            .insert(key.trim().to_string(), value);
    }
    Ok(sections)
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, name: &str, sections: &Sections) -> Result<T> {
    let Some(overrides) = sections.get(name) else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let Value::Object(mut map) = serde_json::to_value(base)? else {
        unreachable!("settings serialize as objects");
    };
    for (k, v) in overrides {
        if !map.contains_key(k) {
            let known: Vec<&String> = map.keys().collect();
            bail!("unknown key {k:?} in [{name}]; known keys: {known:?}");
        }
        map.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(map)).with_context(|| format!("invalid value in [{name}]"))
}

impl CliConfig {
    pub fn from_sections(sections: &Sections) -> Result<Self> {
        for name in sections.keys() {
            if !["corpus", "model", "train"].contains(&name.as_str()) {
                bail!("unknown section [{name}]; expected [corpus], [model] or [train]");
            }
        }
        let defaults = CliConfig::default();
        Ok(CliConfig {
            corpus: overlay(&defaults.corpus, "corpus", sections)?,
            model: overlay(&defaults.model, "model", sections)?,
            train: overlay(&defaults.train, "train", sections)?,
        })
    }

    /// Defaults, overlaid with the file at `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(CliConfig::default()),
            Some(p) => {
                let content = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::from_sections(&parse_sections(&content)?)
                    .with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        for (name, value) in [
            ("corpus", serde_json::to_value(&self.corpus)?),
            ("model", serde_json::to_value(&self.model)?),
            ("train", serde_json::to_value(&self.train)?),
        ] {
            writeln!(out, "[{name}]")?;
            if let Value::Object(map) = value {
                for (k, v) in map {
                    let v = match v {
                        Value::String(s) => s,
                        Value::Null => String::new(),
                        other => other.to_string(),
                    };
                    writeln!(out, "{k}={v}")?;
                }
            }
        }
        Ok(out)
    }
}
