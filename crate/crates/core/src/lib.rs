//! Detection of commercial influencer posts from text and images.
//!
//! The pipeline runs keyword-based weak labeling over a corpus of posts, splits
//! the corpus by account, trains a small multimodal classifier whose text
//! representation attends over image patches, and evaluates it with weighted
//! and macro averaged metrics.
//!
//! ```no_run
//! use crosscue::corpus::{generate_synthetic_corpus, SyntheticConfig};
//! use crosscue::weak_labeler::{RuleSet, weak_label};
//!
//! let corpus = generate_synthetic_corpus(&SyntheticConfig::new(7, 10, 200, 0.5)).unwrap();
//! let rules = RuleSet::default();
//! let result = weak_label(&corpus.posts[0].text, &rules);
//! println!("{:?}", result.label);
//! ```

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod prompting;
pub mod training;
pub mod weak_labeler;

pub use corpus::{Domain, Label, Post};
pub use error::{Error, Result};
