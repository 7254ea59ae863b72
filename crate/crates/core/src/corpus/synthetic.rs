//! Seeded synthetic corpus with learnable text and image signal.
//!
//! Every text-image post gets a 32x32 textured image. A bright square "product
//! patch" appears in 90% of commercial images and 10% of non-commercial ones.
//! Text carries promotional cue words. The joint design is:
//!
//! | class          | patch  | text cue                                   |
//! |----------------|--------|--------------------------------------------|
//! | commercial     | yes    | promo cue (90%) or ambiguous cue (10%)     |
//! | commercial     | no     | promo cue                                  |
//! | non-commercial | yes    | none                                       |
//! | non-commercial | no     | ambiguous cue (10%) or none (90%)          |
//!
//! Text alone is right about 95.5% of the time, the patch alone 90%, and the
//! two together separate the classes exactly. Commercial posts also carry a
//! disclosure keyword from the default rule set, which is what the weak labeler
//! finds and later scrubs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::weak_labeler::{RuleKind, RuleSet};

use super::image::{ImageSource, RgbImage};
use super::{corpus_to_string, Domain, Label, Post};

/// Promotional cue words that only appear in commercial text.
pub const PROMO_CUES: &[&str] = &[
    "partnered",
    "promo",
    "link",
    "shop",
    "launch",
    "exclusive",
    "offer",
    "order",
    "available",
    "collection",
];

/// Cue words shared by both classes at equal rates.
pub const WEAK_CUES: &[&str] = &[
    "obsessed",
    "favourite",
    "recommend",
    "loving",
    "musthave",
    "honestly",
    "tried",
    "finally",
];

const PERSONAL: &[&str] = &[
    "today", "weekend", "friends", "family", "morning", "feeling", "tired", "happy", "memories",
    "lazy", "sunday", "coffee", "walk", "rain", "home", "mood",
];

const EMOJI: &[&str] = &["😍", "👍", "🔥", "✨", "😂", "🙌", "💕", "☀️"];

fn domain_words(domain: Domain) -> &'static [&'static str] {
    match domain {
        Domain::Beauty => &[
            "lipstick", "serum", "skincare", "mascara", "glow", "palette", "foundation", "blush",
            "nails", "routine",
        ],
        Domain::Travel => &[
            "beach", "flight", "hotel", "island", "sunset", "passport", "mountains", "villa",
            "roadtrip", "views",
        ],
        Domain::Fitness => &[
            "workout", "gym", "protein", "run", "yoga", "squats", "cardio", "leggings", "stretch",
            "training",
        ],
        Domain::Food => &[
            "recipe", "brunch", "pasta", "dinner", "vegan", "dessert", "kitchen", "tacos", "baking",
            "flavours",
        ],
        Domain::Tech => &[
            "laptop", "phone", "headphones", "camera", "setup", "keyboard", "battery", "update",
            "screen", "gadget",
        ],
        Domain::Lifestyle => &[
            "candles", "decor", "books", "outfit", "garden", "journal", "plants", "cosy", "style",
            "interior",
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_accounts: usize,
    pub posts_per_account: usize,
    pub commercial_rate: f64,
    /// Extra image-less posts per account, used for the text-only test set.
    pub text_only_per_account: usize,
    pub text_only_commercial_rate: f64,
    /// Fraction of commercial posts planted without any disclosure keyword.
    pub undisclosed_rate: f64,
    /// Fraction of non-commercial posts that use a keyword in a non-commercial sense.
    pub keyword_false_positive_rate: f64,
    pub image_size: usize,
}

impl SyntheticConfig {
    pub fn new(seed: u64, n_accounts: usize, posts_per_account: usize, commercial_rate: f64) -> Self {
        SyntheticConfig {
            seed,
            n_accounts,
            posts_per_account,
            commercial_rate,
            text_only_per_account: 0,
            text_only_commercial_rate: 0.15,
            undisclosed_rate: 0.0,
            keyword_false_positive_rate: 0.0,
            image_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub posts: Vec<Post>,
    /// Images keyed by the relative path stored in `Post::image`.
    pub images: BTreeMap<String, RgbImage>,
}

impl SyntheticCorpus {
    /// Write `corpus.jsonl` and the `images/` directory under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let image_dir = dir.join("images");
        fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
        let corpus_path = dir.join("corpus.jsonl");
        fs::write(&corpus_path, corpus_to_string(&self.posts)?)
            .map_err(|e| Error::io(&corpus_path, e))?;
        for (rel, img) in &self.images {
            super::image::write_ppm(dir.join(rel), img)?;
        }
        Ok(())
    }

    /// Ids of commercial posts planted without a disclosure keyword.
    pub fn undisclosed_ids(&self) -> Vec<&str> {
        self.posts
            .iter()
            .filter(|p| p.gold_label == Some(Label::Commercial) && p.text_keywordless())
            .map(|p| p.id.as_str())
            .collect()
    }
}

impl ImageSource for SyntheticCorpus {
    fn image_for(&self, post: &Post) -> Result<Option<RgbImage>> {
        self.images.image_for(post)
    }
}

impl Post {
    fn text_keywordless(&self) -> bool {
        !crate::weak_labeler::weak_label(&self.text, &RuleSet::default()).is_commercial()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Cue {
    Promo,
    Ambiguous,
    None,
}

pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let in_unit = |r: f64| r > 0.0 && r < 1.0;
    if !in_unit(config.commercial_rate) {
        return Err(Error::InvalidArgument(format!(
            "commercial_rate must lie in (0, 1), got {}",
            config.commercial_rate
        )));
    }
    if config.n_accounts < 1 || config.posts_per_account < 1 {
        return Err(Error::InvalidArgument(
            "n_accounts and posts_per_account must be at least 1".into(),
        ));
    }
    for (name, r) in [
        ("text_only_commercial_rate", config.text_only_commercial_rate),
        ("undisclosed_rate", config.undisclosed_rate),
        ("keyword_false_positive_rate", config.keyword_false_positive_rate),
    ] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {r}")));
        }
    }
    if config.image_size < 16 {
        return Err(Error::InvalidArgument("image_size must be at least 16".into()));
    }

    let rules = RuleSet::default();
    let keyword_rules: Vec<_> = rules.rules().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut posts = Vec::new();
    let mut images = BTreeMap::new();

    // Domains cycle through a seeded permutation so each one recurs.
    let mut domains = Domain::ALL.to_vec();
    domains.shuffle(&mut rng);
    for a in 0..config.n_accounts {
        let account_id = format!("acct_{a:03}");
        let domain = domains[a % domains.len()];
        let total = config.posts_per_account + config.text_only_per_account;
        for i in 0..total {
            let with_image = i < config.posts_per_account;
            let id = format!("{account_id}_p{i:04}");
            let rate = if with_image {
                config.commercial_rate
            } else {
                config.text_only_commercial_rate
            };
            let label = if rng.gen_bool(rate) {
                Label::Commercial
            } else {
                Label::NonCommercial
            };

            let (patch, cue) = if with_image {
                match label {
                    Label::Commercial => {
                        if rng.gen_bool(0.9) {
                            (true, if rng.gen_bool(0.1) { Cue::Ambiguous } else { Cue::Promo })
                        } else {
                            (false, Cue::Promo)
                        }
                    }
                    Label::NonCommercial => {
                        if rng.gen_bool(0.1) {
                            (true, Cue::None)
                        } else {
                            (false, if rng.gen_bool(0.1) { Cue::Ambiguous } else { Cue::None })
                        }
                    }
                }
            } else {
                let cue = match label {
                    Label::Commercial if rng.gen_bool(0.9) => Cue::Promo,
                    Label::Commercial => Cue::Ambiguous,
                    Label::NonCommercial if rng.gen_bool(0.1) => Cue::Ambiguous,
                    Label::NonCommercial => Cue::None,
                };
                (false, cue)
            };

            let mut words: Vec<String> = Vec::new();
            let dw = domain_words(domain);
            for _ in 0..rng.gen_range(3..=5) {
                words.push(dw.choose(&mut rng).unwrap().to_string());
            }
            for _ in 0..rng.gen_range(1..=3) {
                words.push(PERSONAL.choose(&mut rng).unwrap().to_string());
            }
            let cue_words: &[&str] = match cue {
                Cue::Promo => PROMO_CUES,
                Cue::Ambiguous => WEAK_CUES,
                Cue::None => &[],
            };
            if !cue_words.is_empty() {
                for _ in 0..rng.gen_range(1..=2) {
                    let pos = rng.gen_range(0..=words.len());
                    words.insert(pos, cue_words.choose(&mut rng).unwrap().to_string());
                }
            }
            if label == Label::NonCommercial && rng.gen_bool(0.15) {
                let pos = rng.gen_range(0..=words.len());
                words.insert(pos, "@bestie".to_string());
            }

            let mut text = words.join(" ");
            match label {
                Label::Commercial => {
                    if !rng.gen_bool(config.undisclosed_rate) {
                        let rule = keyword_rules.choose(&mut rng).unwrap();
                        let keyword = match rule.kind {
                            RuleKind::BrandPhrase => format!("{} @{}brand", rule.surface, domain_tag(domain)),
                            _ => rule.surface.clone(),
                        };
                        let mut parts: Vec<&str> = text.split(' ').collect();
                        let pos = rng.gen_range(0..=parts.len());
                        parts.insert(pos, &keyword);
                        text = parts.join(" ");
                    }
                }
                Label::NonCommercial => {
                    if config.keyword_false_positive_rate > 0.0
                        && rng.gen_bool(config.keyword_false_positive_rate)
                    {
                        text = format!("just seen that pepsi ad...awkward. {text}");
                    } else if rng.gen_bool(0.02) {
                        text.push_str(" this is not an ad");
                    }
                }
            }
            if rng.gen_bool(0.2) {
                text.push_str(&format!(" https://t.co/{:06x}", rng.gen::<u32>() & 0xff_ffff));
            }
            if rng.gen_bool(0.3) {
                text.push(' ');
                text.push_str(EMOJI.choose(&mut rng).unwrap());
            }
            if rng.gen_bool(0.3) {
                capitalize_first(&mut text);
            }

            let image = if with_image {
                let rel = format!("images/{id}.ppm");
                images.insert(rel.clone(), render_image(&mut rng, config.image_size, patch));
                Some(rel)
            } else {
                None
            };

            posts.push(Post {
                id,
                account_id: account_id.clone(),
                domain,
                text,
                image,
                weak_label: None,
                gold_label: Some(label),
                matched_keywords: Vec::new(),
            });
        }
    }
    Ok(SyntheticCorpus { posts, images })
}

fn domain_tag(domain: Domain) -> &'static str {
    match domain {
        Domain::Beauty => "glowco",
        Domain::Travel => "jetaway",
        Domain::Fitness => "fitfuel",
        Domain::Food => "tastyco",
        Domain::Tech => "gizmo",
        Domain::Lifestyle => "homely",
    }
}

fn capitalize_first(text: &mut String) {
    if let Some(first) = text.chars().next() {
        let upper: String = first.to_uppercase().collect();
        text.replace_range(..first.len_utf8(), &upper);
    }
}

/// Dim textured background, optionally with a bright square somewhere on it.
fn render_image(rng: &mut ChaCha8Rng, size: usize, patch: bool) -> RgbImage {
    let base = [
        rng.gen_range(30..=110),
        rng.gen_range(30..=110),
        rng.gen_range(30..=110),
    ];
    let stripe = rng.gen_range(3..=6);
    let mut img = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let shade = if (x + y) % stripe == 0 { 20 } else { 0 };
            let mut px = [0u8; 3];
            for c in 0..3 {
                let noise: i32 = rng.gen_range(-20..=20);
                px[c] = (base[c] + shade + noise).clamp(0, 255) as u8;
            }
            img.set_pixel(x, y, px);
        }
    }
    if patch {
        let side = rng.gen_range(size / 4..=size * 3 / 8);
        let x0 = rng.gen_range(0..=size - side);
        let y0 = rng.gen_range(0..=size - side);
        let color = [
            rng.gen_range(200..=255),
            rng.gen_range(200..=255),
            rng.gen_range(200..=255),
        ];
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                img.set_pixel(x, y, color);
            }
        }
    }
    img
}
