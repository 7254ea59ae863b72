//! Keyword-based weak labeling with negation exclusion, keyword scrubbing and
//! per-account balanced sampling of non-commercial posts.

mod rules;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Post};
use crate::preprocess::{normalize_text, segment, USER_PLACEHOLDER};

pub use self::rules::{Category, KeywordRule, RuleKind, RuleSet, DEFAULT_RULES_TSV};

/// Tokens inspected before a match for a negating "not".
pub const NEGATION_WINDOW: usize = 2;
/// Tokens inspected after a brand phrase for an @-mention.
pub const MENTION_WINDOW: usize = 3;

/// Half-open token range `[start, end)` over the normalized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordMatch {
    pub surface: String,
    pub category: Category,
    pub span: TokenSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub label: Label,
    pub matches: Vec<KeywordMatch>,
    pub negated_matches: Vec<KeywordMatch>,
}

impl MatchResult {
    pub fn is_commercial(&self) -> bool {
        self.label == Label::Commercial
    }

    pub fn spans(&self) -> Vec<TokenSpan> {
        self.matches.iter().map(|m| m.span).collect()
    }
}

/// Label text as commercial iff it contains at least one non-negated keyword.
///
/// Matching is case-insensitive over the tokens of `normalize_text(text)`; token
/// spans in the result index that token sequence. A match is negated when "not"
/// occurs among the two tokens before it.
pub fn weak_label(text: &str, rules: &RuleSet) -> MatchResult {
    let normalized = normalize_text(text);
    let tokens: Vec<&str> = segment(&normalized).into_iter().map(|t| t.text).collect();
    let mut matches = Vec::new();
    let mut negated = Vec::new();

    for start in 0..tokens.len() {
        for (rule, pattern) in rules.patterns() {
            let end = start + pattern.len();
            if end > tokens.len() || tokens[start..end].iter().zip(pattern).any(|(t, p)| t != p) {
                continue;
            }
            if rule.kind == RuleKind::BrandPhrase {
                let window = &tokens[end..(end + MENTION_WINDOW).min(tokens.len())];
                if !window.contains(&USER_PLACEHOLDER) {
                    continue;
                }
            }
            let m = KeywordMatch {
                surface: rule.surface.clone(),
                category: rule.category,
                span: TokenSpan { start, end },
            };
            if is_negated(&tokens, start) {
                negated.push(m);
            } else {
                matches.push(m);
            }
        }
    }

    MatchResult {
        label: if matches.is_empty() {
            Label::NonCommercial
        } else {
            Label::Commercial
        },
        matches,
        negated_matches: negated,
    }
}

fn is_negated(tokens: &[&str], start: usize) -> bool {
    tokens[start.saturating_sub(NEGATION_WINDOW)..start].contains(&"not")
}

/// Delete the tokens covered by `spans` (overlaps merged) from the normalized
/// text and collapse whitespace. Text with no spans is returned unchanged.
pub fn scrub_keywords(text: &str, spans: &[TokenSpan]) -> String {
    if spans.is_empty() {
        return text.to_owned();
    }
    let normalized = normalize_text(text);
    let tokens = segment(&normalized);
    let mut drop = vec![false; tokens.len()];
    for span in spans {
        for flag in drop.iter_mut().take(span.end.min(tokens.len())).skip(span.start) {
            *flag = true;
        }
    }
    let mut out = String::with_capacity(normalized.len());
    let mut cursor = 0;
    for (tok, dropped) in tokens.iter().zip(&drop) {
        if *dropped {
            out.push_str(&normalized[cursor..tok.start]);
            out.push(' ');
            cursor = tok.end;
        }
    }
    out.push_str(&normalized[cursor..]);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Scrub repeatedly until no keyword matches remain, so that deleting one
/// keyword cannot leave a newly adjacent phrase behind.
pub fn scrub_all(text: &str, rules: &RuleSet) -> String {
    let mut current = text.to_owned();
    loop {
        let result = weak_label(&current, rules);
        if result.matches.is_empty() {
            return current;
        }
        current = scrub_keywords(&current, &result.spans());
    }
}

/// Keep every commercial post and, per account, as many uniformly sampled
/// non-commercial posts as it has commercial ones. Posts without a weak label
/// are dropped. Input order is preserved.
pub fn balance_noncommercial(posts: &[Post], seed: u64) -> Vec<Post> {
    let mut by_account: BTreeMap<&str, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, p) in posts.iter().enumerate() {
        let entry = by_account.entry(p.account_id.as_str()).or_default();
        match p.weak_label {
            Some(Label::Commercial) => entry.0 += 1,
            Some(Label::NonCommercial) => entry.1.push(i),
            None => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = BTreeSet::new();
    for (n_commercial, pool) in by_account.values() {
        let k = (*n_commercial).min(pool.len());
        for j in rand::seq::index::sample(&mut rng, pool.len(), k) {
            keep.insert(pool[j]);
        }
    }
    posts
        .iter()
        .enumerate()
        .filter(|(i, p)| p.weak_label == Some(Label::Commercial) || keep.contains(i))
        .map(|(_, p)| p.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingSummary {
    pub posts_in: usize,
    pub posts_out: usize,
    pub commercial: usize,
    pub non_commercial: usize,
    pub matches_by_category: BTreeMap<Category, usize>,
    pub matches_by_keyword: BTreeMap<String, usize>,
    pub negation_suppressions: usize,
    /// Scrubbed commercial posts that still match a rule; zero when scrubbing works.
    pub post_scrub_leaks: usize,
}

/// Weak-label, scrub and balance a corpus.
///
/// Text-image posts are balanced per account. Image-less posts are labeled and
/// scrubbed but never subsampled; they feed the text-only test set.
pub fn label_corpus(posts: &[Post], rules: &RuleSet, seed: u64) -> (Vec<Post>, LabelingSummary) {
    let mut summary = LabelingSummary {
        posts_in: posts.len(),
        ..Default::default()
    };
    for c in Category::ALL {
        summary.matches_by_category.insert(c, 0);
    }
    let mut labeled = Vec::with_capacity(posts.len());
    for post in posts {
        let result = weak_label(&post.text, rules);
        let mut post = post.clone();
        post.weak_label = Some(result.label);
        post.matched_keywords = result.matches.iter().map(|m| m.surface.clone()).collect();
        summary.negation_suppressions += result.negated_matches.len();
        for m in &result.matches {
            *summary.matches_by_category.entry(m.category).or_default() += 1;
            *summary.matches_by_keyword.entry(m.surface.clone()).or_default() += 1;
        }
        if result.is_commercial() {
            post.text = scrub_all(&post.text, rules);
            if weak_label(&post.text, rules).is_commercial() {
                summary.post_scrub_leaks += 1;
            }
        }
        labeled.push(post);
    }

    let (with_image, text_only): (Vec<Post>, Vec<Post>) =
        labeled.into_iter().partition(Post::has_image);
    let balanced = balance_noncommercial(&with_image, seed);
    let kept: BTreeSet<&str> = balanced.iter().map(|p| p.id.as_str()).collect();
    let text_only_ids: BTreeSet<&str> = text_only.iter().map(|p| p.id.as_str()).collect();
    let by_id: BTreeMap<&str, &Post> = balanced.iter().chain(text_only.iter()).map(|p| (p.id.as_str(), p)).collect();
    let out: Vec<Post> = posts
        .iter()
        .filter(|p| kept.contains(p.id.as_str()) || text_only_ids.contains(p.id.as_str()))
        .map(|p| by_id[p.id.as_str()].clone())
        .collect();

    summary.posts_out = out.len();
    summary.commercial = out.iter().filter(|p| p.weak_label == Some(Label::Commercial)).count();
    summary.non_commercial = out.len() - summary.commercial;
    (out, summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use proptest::prelude::*;

    fn rules() -> RuleSet {
        RuleSet::default()
    }

    fn surfaces(ms: &[KeywordMatch]) -> Vec<&str> {
        ms.iter().map(|m| m.surface.as_str()).collect()
    }

    #[test]
    fn pepsi_ad_is_a_false_positive() {
        let r = weak_label("Just seen that Pepsi ad...awkward.", &rules());
        assert_eq!(r.label, Label::Commercial);
        assert_eq!(surfaces(&r.matches), ["ad"]);
    }

    #[test]
    fn negated_ad_is_suppressed() {
        let r = weak_label("this is not an ad, promise", &rules());
        assert_eq!(r.label, Label::NonCommercial);
        assert!(r.matches.is_empty());
        assert_eq!(surfaces(&r.negated_matches), ["ad"]);
        let r = weak_label("not ad", &rules());
        assert_eq!(r.label, Label::NonCommercial);
    }

    #[test]
    fn hashtag_giveaway() {
        let r = weak_label("loving my new #giveaway prize", &rules());
        assert_eq!(r.label, Label::Commercial);
        assert_eq!(surfaces(&r.matches), ["#giveaway"]);
        assert_eq!(r.matches[0].span, TokenSpan { start: 3, end: 4 });
    }

    #[test]
    fn empty_text() {
        let r = weak_label("", &rules());
        assert_eq!(r.label, Label::NonCommercial);
        assert!(r.matches.is_empty() && r.negated_matches.is_empty());
    }

    #[test]
    fn words_match_whole_tokens_only() {
        assert!(!weak_label("we advance the gifted", &rules()).is_commercial());
        assert!(weak_label("AD time", &rules()).is_commercial());
    }

    #[test]
    fn brand_phrase_needs_mention() {
        assert!(!weak_label("thanks to everyone who came", &rules()).is_commercial());
        assert!(weak_label("thanks to @nike for these", &rules()).is_commercial());
        assert!(weak_label("thanks to the lovely @nike", &rules()).is_commercial());
        assert!(!weak_label("thanks to my lovely sister @amy", &rules()).is_commercial());
    }

    #[test]
    fn phrases_match_contiguously() {
        assert!(weak_label("use my Discount Code today", &rules()).is_commercial());
        assert!(!weak_label("discount on code", &rules()).is_commercial());
    }

    #[test]
    fn scrub_removes_matched_tokens() {
        let r = weak_label("great #gift from them", &rules());
        assert_eq!(scrub_keywords("great #gift from them", &r.spans()), "great from them");
    }

    #[test]
    fn scrub_without_matches_is_identity() {
        assert_eq!(scrub_keywords("Nothing To See", &[]), "Nothing To See");
    }

    #[test]
    fn overlapping_spans_are_unioned() {
        let spans = [TokenSpan { start: 0, end: 2 }, TokenSpan { start: 1, end: 3 }];
        assert_eq!(scrub_keywords("a b c d", &spans), "d");
    }

    #[test]
    fn scrub_all_catches_newly_adjacent_phrases() {
        let text = "use my discount #ad code";
        let once = scrub_keywords(text, &weak_label(text, &rules()).spans());
        assert!(weak_label(&once, &rules()).is_commercial());
        let full = scrub_all(text, &rules());
        assert_eq!(full, "use my");
        assert_eq!(scrub_all(&full, &rules()), full);
    }

    fn post(id: usize, account: &str, label: Label) -> Post {
        Post {
            id: format!("{account}-{id}"),
            account_id: account.into(),
            domain: Domain::Beauty,
            text: String::new(),
            image: Some("x.ppm".into()),
            weak_label: Some(label),
            gold_label: None,
            matched_keywords: vec![],
        }
    }

    fn account(name: &str, c: usize, nc: usize) -> Vec<Post> {
        (0..c)
            .map(|i| post(i, name, Label::Commercial))
            .chain((c..c + nc).map(|i| post(i, name, Label::NonCommercial)))
            .collect()
    }

    #[test]
    fn balance_keeps_k_noncommercial() {
        let out = balance_noncommercial(&account("a", 3, 10), 1);
        let nc = out.iter().filter(|p| p.weak_label == Some(Label::NonCommercial)).count();
        assert_eq!(nc, 3);
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn balance_clamps_to_available() {
        let out = balance_noncommercial(&account("a", 5, 2), 1);
        assert_eq!(out.len(), 7);
    }

    #[test]
    fn balance_is_seeded() {
        let posts = [account("a", 3, 10), account("b", 2, 9)].concat();
        assert_eq!(balance_noncommercial(&posts, 4), balance_noncommercial(&posts, 4));
    }

    const VOCAB: &[&str] = &[
        "not", "a", "an", "ad", "#ad", "gift", "#gift", "thanks", "to", "@nike", "discount",
        "code", "my", "new", "great", "collab", "in", "association", "with", "sample", "unpaid",
    ];

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(VOCAB), 0..12).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn adding_a_rule_never_removes_commercial(text in arb_text(), extra in proptest::sample::select(VOCAB)) {
            let base = rules();
            let mut more = base.rules().to_vec();
            if !extra.starts_with('@') {
                let kind = if extra.starts_with('#') { RuleKind::Hashtag } else { RuleKind::Word };
                more.push(KeywordRule::new(extra, Category::Guidelines, kind).unwrap());
            }
            let more = RuleSet::new(more).unwrap();
            if weak_label(&text, &base).is_commercial() {
                prop_assert!(weak_label(&text, &more).is_commercial());
            }
        }

        #[test]
        fn negation_depends_only_on_two_preceding_tokens(
            prefix in arb_text(), a in proptest::sample::select(VOCAB), b in proptest::sample::select(VOCAB)
        ) {
            // Whatever precedes the window, "ad" after (a, b) is negated iff a or b is "not".
            let text = format!("{prefix} {a} {b} ad");
            let r = weak_label(&text, &rules());
            let last = segment(&normalize_text(&text)).len() - 1;
            let negated = r.negated_matches.iter().any(|m| m.span.start == last && m.surface == "ad");
            prop_assert_eq!(negated, a == "not" || b == "not");
        }

        #[test]
        fn scrub_all_is_idempotent_and_leak_free(text in arb_text()) {
            let once = scrub_all(&text, &rules());
            prop_assert_eq!(scrub_all(&once, &rules()), once.clone());
            prop_assert!(!weak_label(&once, &rules()).is_commercial());
        }
    }
}
