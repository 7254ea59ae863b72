//! Zero-shot and few-shot prompt rendering and response parsing. No language
//! model is called; rendered prompts can be written out and the responses
//! scored afterwards.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

pub const INSTRUCTION: &str = "Label the next text as 'commercial' or 'not commercial'.";
pub const SHOTS_PER_CLASS: usize = 2;
/// Label used when a response cannot be parsed and the caller asks for a fallback.
pub const DEFAULT_FALLBACK: Label = Label::NonCommercial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub mode: PromptMode,
    pub shots: Vec<(String, Label)>,
}

impl PromptTemplate {
    pub fn zero_shot() -> Self {
        PromptTemplate {
            mode: PromptMode::ZeroShot,
            shots: Vec::new(),
        }
    }

    pub fn few_shot(shots: Vec<(String, Label)>) -> Result<Self> {
        let t = PromptTemplate {
            mode: PromptMode::FewShot,
            shots,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PromptMode::ZeroShot if !self.shots.is_empty() => Err(Error::InvalidArgument(
                "zero-shot templates take no examples".into(),
            )),
            PromptMode::ZeroShot => Ok(()),
            PromptMode::FewShot => {
                let c = self.shots.iter().filter(|s| s.1 == Label::Commercial).count();
                let n = self.shots.len() - c;
                if c != SHOTS_PER_CLASS || n != SHOTS_PER_CLASS {
                    return Err(Error::InvalidArgument(format!(
                        "few-shot templates need {SHOTS_PER_CLASS} examples per class, got {c} commercial and {n} non-commercial"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Label wording used inside prompts. Parsing it yields the label back.
pub fn label_string(label: Label) -> &'static str {
    match label {
        Label::Commercial => "commercial",
        Label::NonCommercial => "not commercial",
    }
}

fn block(text: &str) -> String {
    format!("{INSTRUCTION} Text: {text}")
}

/// Render a prompt for one post. Few-shot blocks are separated by newlines.
pub fn render_prompt(template: &PromptTemplate, tweet: &str) -> Result<String> {
    template.validate()?;
    match template.mode {
        PromptMode::ZeroShot => Ok(block(tweet)),
        PromptMode::FewShot => {
            let mut lines: Vec<String> = template
                .shots
                .iter()
                .map(|(t, l)| format!("{} // {}", block(t), label_string(*l)))
                .collect();
            lines.push(format!("{} //", block(tweet)));
            Ok(lines.join("\n"))
        }
    }
}

/// A response that maps to neither label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub raw: String,
}

/// Drop punctuation and whitespace, lowercase, then match the label words.
pub fn parse_response(raw: &str) -> std::result::Result<Label, ParseFailure> {
    let key: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    match key.as_str() {
        "commercial" => Ok(Label::Commercial),
        "notcommercial" => Ok(Label::NonCommercial),
        _ => Err(ParseFailure {
            raw: raw.to_owned(),
        }),
    }
}

/// Parse a batch of responses, substituting `fallback` for failures.
/// Returns the labels and the number of failures.
pub fn parse_responses<S: AsRef<str>>(responses: &[S], fallback: Label) -> (Vec<Label>, usize) {
    let mut failures = 0;
    let labels = responses
        .iter()
        .map(|r| {
            parse_response(r.as_ref()).unwrap_or_else(|_| {
                failures += 1;
                fallback
            })
        })
        .collect();
    (labels, failures)
}

/// Seeded draw of two examples per class from a training pool, in shuffled order.
pub fn sample_shots(pool: &[(String, Label)], seed: u64) -> Result<Vec<(String, Label)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shots = Vec::with_capacity(2 * SHOTS_PER_CLASS);
    for label in Label::ALL {
        let candidates: Vec<&(String, Label)> = pool.iter().filter(|s| s.1 == label).collect();
        if candidates.len() < SHOTS_PER_CLASS {
            return Err(Error::InvalidArgument(format!(
                "need {SHOTS_PER_CLASS} {label} examples, pool has {}",
                candidates.len()
            )));
        }
        shots.extend(
            candidates
                .choose_multiple(&mut rng, SHOTS_PER_CLASS)
                .map(|s| (*s).clone()),
        );
    }
    shots.shuffle(&mut rng);
    Ok(shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shots() -> Vec<(String, Label)> {
        vec![
            ("a".into(), Label::Commercial),
            ("b".into(), Label::NonCommercial),
            ("c".into(), Label::NonCommercial),
            ("d".into(), Label::Commercial),
        ]
    }

    #[test]
    fn zero_shot_text() {
        assert_eq!(
            render_prompt(&PromptTemplate::zero_shot(), "hi").unwrap(),
            "Label the next text as 'commercial' or 'not commercial'. Text: hi"
        );
    }

    #[test]
    fn few_shot_has_five_blocks() {
        let t = PromptTemplate::few_shot(shots()).unwrap();
        let p = render_prompt(&t, "q").unwrap();
        assert_eq!(p.matches("Label the next text").count(), 5);
        assert!(p.ends_with("Text: q //"));
        assert!(p.lines().next().unwrap().ends_with("Text: a // commercial"));
    }

    #[test]
    fn few_shot_needs_two_per_class() {
        let mut s = shots();
        s.pop();
        assert!(PromptTemplate::few_shot(s).is_err());
        let mut s = shots();
        s[0].1 = Label::NonCommercial;
        assert!(PromptTemplate::few_shot(s).is_err());
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_response("Commercial."), Ok(Label::Commercial));
        assert_eq!(parse_response(" not commercial "), Ok(Label::NonCommercial));
        assert!(parse_response("maybe").is_err());
        for l in Label::ALL {
            assert_eq!(parse_response(label_string(l)), Ok(l));
        }
        let (labels, failures) = parse_responses(&["commercial", "??"], DEFAULT_FALLBACK);
        assert_eq!(labels, vec![Label::Commercial, Label::NonCommercial]);
        assert_eq!(failures, 1);
    }

    #[test]
    fn shot_sampling_is_seeded_and_balanced() {
        let pool: Vec<(String, Label)> = (0..20)
            .map(|i| (format!("t{i}"), Label::from_index(i % 2).unwrap()))
            .collect();
        let a = sample_shots(&pool, 3).unwrap();
        assert_eq!(a, sample_shots(&pool, 3).unwrap());
        assert!(PromptTemplate::few_shot(a).is_ok());
        assert!(sample_shots(&pool[..2], 3).is_err());
    }

    proptest! {
        #[test]
        fn render_is_deterministic(tweet in ".{0,40}") {
            let t = PromptTemplate::few_shot(shots()).unwrap();
            prop_assert_eq!(render_prompt(&t, &tweet).unwrap(), render_prompt(&t, &tweet).unwrap());
        }
    }
}
