//! Class-weighted training with Adam, validation-loss checkpoint selection,
//! run directories and multi-seed aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ImageSource, Label, Post, SplitName, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{batch_loss, forward_backward, predict, Example, Features, Matrix, ModelConfig, ModelParams};
use crate::preprocess::{encode_text, normalize_text, prepare_image, Vocab, DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQ, UNK_ID};

/// Balanced weights `w_c = N / (K * n_c)` over the `K` classes present.
pub fn class_weights<K: Ord + Clone>(counts: &BTreeMap<K, usize>) -> Result<BTreeMap<K, f64>> {
    if counts.is_empty() || counts.values().any(|&n| n == 0) {
        return Err(Error::InvalidArgument(
            "class weights need a positive count for every class".into(),
        ));
    }
    let total: usize = counts.values().sum();
    let k = counts.len();
    Ok(counts
        .iter()
        .map(|(c, &n)| (c.clone(), total as f64 / (k as f64 * n as f64)))
        .collect())
}

/// Balanced weights indexed by [`Label::index`].
pub fn label_weights(counts: [usize; 2]) -> Result<[f64; 2]> {
    let map: BTreeMap<usize, usize> = [(0, counts[0]), (1, counts[1])].into();
    let w = class_weights(&map)?;
    Ok([w[&0], w[&1]])
}

pub fn label_counts(labels: impl IntoIterator<Item = Label>) -> [usize; 2] {
    let mut c = [0; 2];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

/// Adam with per-tensor first and second moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|(_, t)| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let grads = grad.tensors();
        for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[k].1.as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (j, w) in p.as_mut_slice().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
    /// Probability of replacing each non-[CLS] training token with [UNK].
    pub token_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 20,
            seed: 0,
            patience: None,
            token_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.token_dropout) {
            return Err(Error::InvalidArgument(format!(
                "token_dropout must lie in [0, 1), got {}",
                self.token_dropout
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and max_epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_weighted_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss (earliest on ties); 0 before any epoch.
    pub best_epoch: usize,
}

impl RunHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// One JSON record per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best epoch.
    pub params: ModelParams,
    pub history: RunHistory,
    pub class_weights: [f64; 2],
}

pub fn predict_labels(params: &ModelParams, examples: &[Example]) -> Result<Vec<Label>> {
    examples
        .iter()
        .map(|ex| predict(params, &ex.features).map(|o| o.label()))
        .collect()
}

pub fn evaluate_examples(params: &ModelParams, examples: &[Example]) -> Result<EvalReport> {
    let pred = predict_labels(params, examples)?;
    let gold: Vec<Label> = examples.iter().map(|e| e.label).collect();
    evaluate(&gold, &pred)
}

/// Train on `train`, select the epoch with the lowest loss on `dev`.
///
/// The model is initialized from `config.seed`; epoch `e` shuffles and draws
/// dropout masks from ChaCha stream `e`, so a run is fully determined by its
/// inputs.
pub fn train(
    train: &[Example],
    dev: &[Example],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument(
            "train and dev sets must be non-empty".into(),
        ));
    }
    let weights = label_weights(label_counts(train.iter().map(|e| e.label)))?;
    let mut params = ModelParams::init(model_config, config.seed)?;
    let mut adam = Adam::new(config.learning_rate, &params);
    let mut history = RunHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let diverged = |epoch: usize, e: Error, history: &RunHistory| match e {
        Error::NonFiniteLoss(message) => Error::Diverged {
            epoch,
            message,
            history: Box::new(history.clone()),
        },
        other => other,
    };

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            for &i in chunk {
                let mut ex = train[i].clone();
                if config.token_dropout > 0.0 {
                    for id in ex.features.ids.iter_mut().skip(1) {
                        if rng.gen_bool(config.token_dropout) {
                            *id = UNK_ID;
                        }
                    }
                }
                batch.push(ex);
            }
            let (loss, grad) = forward_backward(&params, &batch, weights, Some(&mut rng))
                .map_err(|e| diverged(epoch, e, &history))?;
            adam.step(&mut params, &grad);
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = batch_loss(&params, dev, weights).map_err(|e| diverged(epoch, e, &history))?;
        let val_weighted_f1 = evaluate_examples(&params, dev)?.weighted.f1;
        info!(
            "epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:.5}, val weighted F1 {val_weighted_f1:.4}"
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_weighted_f1,
        });
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
        }
        if let Some(p) = config.patience {
            if epoch - history.best_epoch >= p {
                debug!("no improvement for {p} epochs, stopping");
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        history,
        class_weights: weights,
    })
}

/// Which label of a post to train or score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Weak,
    Gold,
}

fn label_of(post: &Post, source: LabelSource) -> Result<Label> {
    let l = match source {
        LabelSource::Weak => post.weak_label,
        LabelSource::Gold => post.gold_label,
    };
    l.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "post {} has no {} label",
            post.id,
            if source == LabelSource::Weak { "weak" } else { "gold" }
        ))
    })
}

/// Model inputs for one post. Images are only loaded when the mode uses them.
pub fn featurize(
    post: &Post,
    vocab: &Vocab,
    config: &ModelConfig,
    images: &dyn ImageSource,
) -> Result<Features> {
    let ids = encode_text(&post.text, vocab, config.text_len_limit()).ids;
    let pixels = if config.fusion.uses_image() {
        match images.image_for(post)? {
            Some(img) => Some(prepare_image(&img, config.image_size).map_err(|e| Error::Image {
                post_id: post.id.clone(),
                message: e.to_string(),
            })?),
            None => None,
        }
    } else {
        None
    };
    Ok(Features { ids, pixels })
}

pub fn build_examples<'a>(
    posts: impl IntoIterator<Item = &'a Post>,
    source: LabelSource,
    vocab: &Vocab,
    config: &ModelConfig,
    images: &dyn ImageSource,
) -> Result<Vec<Example>> {
    posts
        .into_iter()
        .map(|p| {
            Ok(Example {
                features: featurize(p, vocab, config, images)?,
                label: label_of(p, source)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSet {
    TextImage,
    TextOnly,
}

impl std::str::FromStr for TestSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_image" => Ok(TestSet::TextImage),
            "text_only" => Ok(TestSet::TextOnly),
            _ => Err(Error::InvalidArgument(format!(
                "unknown test set {s:?}; expected text_image or text_only"
            ))),
        }
    }
}

pub fn test_posts<'a>(posts: &'a [Post], split: &SplitSpec, test_set: TestSet) -> Vec<&'a Post> {
    match test_set {
        TestSet::TextImage => split.select(posts, SplitName::Test),
        TestSet::TextOnly => split.select_text_only(posts),
    }
}

/// Vocabulary over the normalized training-split texts.
pub fn build_vocab(posts: &[Post], split: &SplitSpec) -> Vocab {
    let texts: Vec<String> = split
        .select(posts, SplitName::Train)
        .iter()
        .map(|p| normalize_text(&p.text))
        .collect();
    Vocab::build(texts.iter().map(String::as_str), DEFAULT_MIN_FREQ, DEFAULT_MAX_SIZE)
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub vocab: Vocab,
    pub model_config: ModelConfig,
    pub test_ids: Vec<String>,
    pub test_predictions: Vec<Label>,
    /// Scored against gold labels.
    pub test_report: EvalReport,
}

/// Build the vocabulary, train on weak labels of the train split with dev
/// selection, then score the chosen test set against gold labels.
pub fn run_experiment(
    posts: &[Post],
    split: &SplitSpec,
    images: &dyn ImageSource,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    test_set: TestSet,
) -> Result<ExperimentResult> {
    let vocab = build_vocab(posts, split);
    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        ..model_config.clone()
    };
    let examples = |name: SplitName| {
        build_examples(
            split.select(posts, name),
            LabelSource::Weak,
            &vocab,
            &model_config,
            images,
        )
    };
    let train_ex = examples(SplitName::Train)?;
    let dev_ex = examples(SplitName::Dev)?;
    let test = test_posts(posts, split, test_set);
    let test_ex = build_examples(
        test.iter().copied(),
        LabelSource::Gold,
        &vocab,
        &model_config,
        images,
    )?;
    info!(
        "training {} on {} train / {} dev examples, vocabulary {}",
        model_config.fusion,
        train_ex.len(),
        dev_ex.len(),
        vocab.len()
    );
    let outcome = train(&train_ex, &dev_ex, &model_config, train_config)?;
    if test_ex.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let test_predictions = predict_labels(&outcome.params, &test_ex)?;
    let gold: Vec<Label> = test_ex.iter().map(|e| e.label).collect();
    let test_report = evaluate(&gold, &test_predictions)?;
    Ok(ExperimentResult {
        outcome,
        vocab,
        model_config,
        test_ids: test.iter().map(|p| p.id.clone()).collect(),
        test_predictions,
        test_report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub fusion: crate::model::FusionMode,
    pub test_set: TestSet,
    pub seed: u64,
    pub best_epoch: usize,
    /// Full-precision ratios.
    pub report: EvalReport,
    /// Percentages rounded to two decimals.
    pub percent: EvalReport,
}

/// Pretty JSON for the `metrics` file of a run directory.
pub fn metrics_json(result: &ExperimentResult, test_set: TestSet, seed: u64) -> Result<String> {
    let record = MetricsRecord {
        fusion: result.model_config.fusion,
        test_set,
        seed,
        best_epoch: result.outcome.history.best_epoch,
        report: result.test_report.clone(),
        percent: result.test_report.to_percent(),
    };
    Ok(serde_json::to_string_pretty(&record)? + "\n")
}

/// Resolved settings as `key=value` lines under `[model]` and `[train]` headers.
pub fn render_config(model: &ModelConfig, train: &TrainConfig) -> Result<String> {
    let mut out = String::new();
    for (section, value) in [
        ("model", serde_json::to_value(model)?),
        ("train", serde_json::to_value(train)?),
    ] {
        writeln!(out, "[{section}]").expect("string write");
        if let serde_json::Value::Object(map) = value {
            let mut keys: Vec<_> = map.into_iter().collect();
            keys.sort_by(|a, b| a.0.cmp(&b.0));
            for (k, v) in keys {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                };
                writeln!(out, "{k}={v}").expect("string write");
            }
        }
    }
    Ok(out)
}

pub const CONFIG_FILE: &str = "config";
pub const HISTORY_FILE: &str = "history";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const METRICS_FILE: &str = "metrics";
pub const VOCAB_FILE: &str = "vocab.tsv";

/// Write `config`, `history`, `best.ckpt`, `metrics` and `vocab.tsv` into `dir`.
pub fn write_run_dir(dir: impl AsRef<Path>, result: &ExperimentResult, train_config: &TrainConfig, metrics: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, content: &str| {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(path, e))
    };
    write(CONFIG_FILE, &render_config(&result.model_config, train_config)?)?;
    write(HISTORY_FILE, &result.outcome.history.to_jsonl()?)?;
    write(METRICS_FILE, metrics)?;
    result.outcome.params.save(dir.join(CHECKPOINT_FILE))?;
    result.vocab.save(dir.join(VOCAB_FILE))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
}

/// Per-metric mean and sample standard deviation across runs.
pub fn aggregate_runs(results: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, MeanStd>> {
    if results.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs at least 2 runs, got {}",
            results.len()
        )));
    }
    let keys: Vec<&String> = results[0].keys().collect();
    for (i, r) in results.iter().enumerate().skip(1) {
        if !r.keys().eq(keys.iter().copied()) {
            return Err(Error::InvalidArgument(format!(
                "run {i} reports a different set of metrics than run 0"
            )));
        }
    }
    let n = results.len() as f64;
    Ok(keys
        .into_iter()
        .map(|k| {
            let mean = results.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = results.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (k.clone(), MeanStd { mean, std: var.sqrt() })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FusionMode;
    use crate::preprocess::PixelTensor;
    use proptest::prelude::*;

    #[test]
    fn weights_examples() {
        let w = label_weights([5781, 5596]).unwrap();
        assert!((w[0] - 11377.0 / 11562.0).abs() < 1e-12);
        assert!((w[1] - 11377.0 / 11192.0).abs() < 1e-12);
        assert_eq!(label_weights([7, 7]).unwrap(), [1.0, 1.0]);
        let m: BTreeMap<&str, usize> = [("a", 1), ("b", 3)].into();
        let w = class_weights(&m).unwrap();
        assert_eq!(w["a"], 2.0);
        assert!((w["b"] - 4.0 / 6.0).abs() < 1e-15);
        assert!(label_weights([0, 3]).is_err());
    }

    #[test]
    fn aggregation() {
        let run = |v: f64| BTreeMap::from([("f1".to_string(), v)]);
        let a = aggregate_runs(&[run(70.0), run(70.0), run(70.0)]).unwrap();
        assert_eq!(a["f1"], MeanStd { mean: 70.0, std: 0.0 });
        let a = aggregate_runs(&[run(60.0), run(70.0), run(80.0)]).unwrap();
        assert!((a["f1"].mean - 70.0).abs() < 1e-12);
        assert!((a["f1"].std - 10.0).abs() < 1e-12);
        assert!(aggregate_runs(&[run(1.0)]).is_err());
        let other = BTreeMap::from([("p".to_string(), 1.0)]);
        assert!(aggregate_runs(&[run(1.0), other]).is_err());
    }

    fn toy_examples(n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| {
                let label = Label::from_index(i % 2).unwrap();
                let mut px = PixelTensor::zeros(4);
                if label == Label::Commercial {
                    px.data.iter_mut().for_each(|v| *v = 1.0);
                }
                Example {
                    features: Features {
                        ids: vec![0, 5 + label.index(), 3 + i % 3],
                        pixels: Some(px),
                    },
                    label,
                }
            })
            .collect()
    }

    fn toy_config(fusion: FusionMode) -> ModelConfig {
        ModelConfig {
            d: 4,
            layers: 1,
            heads: 1,
            ff_dim: 8,
            patch_size: 2,
            image_size: 4,
            vocab_size: 8,
            bilstm_embed_dim: 4,
            bilstm_hidden: 3,
            fusion,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn one_epoch_selects_epoch_one_and_runs_repeat_exactly() {
        let ex = toy_examples(12);
        let tc = TrainConfig {
            max_epochs: 1,
            batch_size: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&ex, &ex, &toy_config(FusionMode::CrossAtt), &tc).unwrap();
        assert_eq!(a.history.best_epoch, 1);
        let b = train(&ex, &ex, &toy_config(FusionMode::CrossAtt), &tc).unwrap();
        assert_eq!(
            a.params.to_checkpoint_bytes().unwrap(),
            b.params.to_checkpoint_bytes().unwrap()
        );
    }

    #[test]
    fn best_checkpoint_has_minimal_val_loss() {
        let ex = toy_examples(16);
        let tc = TrainConfig {
            max_epochs: 8,
            batch_size: 4,
            learning_rate: 0.02,
            seed: 1,
            ..TrainConfig::default()
        };
        for mode in FusionMode::ALL {
            let out = train(&ex, &ex, &toy_config(mode), &tc).unwrap();
            let best = out.history.best().unwrap().val_loss;
            assert!(out.history.epochs.iter().all(|e| best <= e.val_loss), "{mode}");
            let again = batch_loss(&out.params, &ex, out.class_weights).unwrap();
            assert_eq!(again, best, "{mode}");
        }
    }

    #[test]
    fn patience_stops_early() {
        let ex = toy_examples(8);
        let tc = TrainConfig {
            max_epochs: 50,
            batch_size: 8,
            learning_rate: 0.5,
            patience: Some(2),
            ..TrainConfig::default()
        };
        let out = train(&ex, &ex, &toy_config(FusionMode::TextOnly), &tc).unwrap();
        let last = out.history.epochs.last().unwrap().epoch;
        assert!(last < 50);
        assert_eq!(last - out.history.best_epoch, 2);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let ex = toy_examples(4);
        let m = toy_config(FusionMode::TextOnly);
        let zero_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&ex, &ex, &m, &zero_lr).is_err());
        assert!(train(&[], &ex, &m, &TrainConfig::default()).is_err());
    }

    #[test]
    fn config_renders_as_key_value_sections() {
        let text = render_config(&ModelConfig::default(), &TrainConfig::default()).unwrap();
        assert!(text.starts_with("[model]\n"));
        assert!(text.contains("\nfusion=cross_att\n"));
        assert!(text.contains("[train]\nbatch_size=16\n"));
        assert!(text.contains("patience=\n"));
    }

    proptest! {
        #[test]
        fn weighted_counts_sum_to_total(a in 1usize..10_000, b in 1usize..10_000) {
            let w = label_weights([a, b]).unwrap();
            let s = w[0] * a as f64 + w[1] * b as f64;
            prop_assert!((s - (a + b) as f64).abs() < 1e-9);
        }
    }
}
