mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crosscue::analysis::analyze;
use crosscue::corpus::{
    generate_synthetic_corpus, load_corpus, make_text_only_test, save_corpus, split_by_account,
    ImageDir, SplitName, SplitSpec, DEFAULT_SPLIT_RATIOS,
};
use crosscue::metrics::{evaluate, labels_from_counts, most_frequent_baseline, EvalReport};
use crosscue::model::{FusionMode, ModelParams};
use crosscue::preprocess::Vocab;
use crosscue::prompting::{
    parse_responses, render_prompt, sample_shots, PromptTemplate, DEFAULT_FALLBACK,
};
use crosscue::training::{
    aggregate_runs, build_examples, label_counts, metrics_json, predict_labels, run_experiment,
    test_posts, write_run_dir, LabelSource, TestSet, CHECKPOINT_FILE, VOCAB_FILE,
};
use crosscue::weak_labeler::{label_corpus, RuleSet};
use crosscue::{Label, Post};

use config::CliConfig;

const CORPUS_FILE: &str = "corpus.jsonl";
const SUMMARY_FILE: &str = "labeling_summary.json";
const PREDICTIONS_FILE: &str = "predictions.tsv";
const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Parser)]
#[command(name = "crosscue", version, about = "Commercial influencer content detection pipeline")]
struct Cli {
    /// Settings file with [corpus], [model] and [train] sections of key=value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus with images.
    GenCorpus(GenCorpusArgs),
    /// Weak-label, scrub and balance a corpus.
    Label(LabelArgs),
    /// Split a corpus by account and sample the text-only test set.
    Split(SplitArgs),
    /// Train on weak labels and score the test set against gold labels.
    Train(TrainArgs),
    /// Score a predictions file, a trained run, or the most-frequent baseline.
    Eval(EvalArgs),
    /// Compare predictions with gold and weak labels.
    Analyze(AnalyzeArgs),
    /// Render zero- or few-shot prompts, or score model responses.
    Prompt(PromptArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Output directory; receives corpus.jsonl and images/.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    accounts: Option<usize>,
    #[arg(long)]
    posts_per_account: Option<usize>,
    #[arg(long)]
    commercial_rate: Option<f64>,
    #[arg(long)]
    text_only_per_account: Option<usize>,
    #[arg(long)]
    undisclosed_rate: Option<f64>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory; receives corpus.jsonl and labeling_summary.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keyword rules as `surface<TAB>category<TAB>kind` lines.
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output split file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Image directory; defaults to the corpus file's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TestSetArg::TextImage)]
    test_set: TestSetArg,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds; each run goes to `<out>/seed_<n>` and the
    /// mean and standard deviation go to aggregate.json.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Vec<u64>,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TestSetArg::TextImage)]
    test_set: TestSetArg,
    /// `id<TAB>label` lines to score against gold labels in the corpus.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Run directory written by `train`; its checkpoint predicts the test set.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Training label counts `nc,c` for the baseline instead of a corpus.
    #[arg(long, value_delimiter = ',')]
    train_counts: Vec<usize>,
    /// Gold label counts `nc,c` for the baseline instead of a corpus.
    #[arg(long, value_delimiter = ',')]
    gold_counts: Vec<usize>,
    /// Optional output file for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PromptArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = PromptModeArg::ZeroShot)]
    mode: PromptModeArg,
    /// Seed for drawing few-shot examples from the training split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `id<TAB>response` lines; when given, responses are parsed and scored.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TestSetArg {
    TextImage,
    TextOnly,
}

impl From<TestSetArg> for TestSet {
    fn from(t: TestSetArg) -> Self {
        match t {
            TestSetArg::TextImage => TestSet::TextImage,
            TestSetArg::TextOnly => TestSet::TextOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FusionArg {
    CrossAtt,
    Concat,
    TextOnly,
    ImageOnly,
    BilstmAtt,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::CrossAtt => FusionMode::CrossAtt,
            FusionArg::Concat => FusionMode::Concat,
            FusionArg::TextOnly => FusionMode::TextOnly,
            FusionArg::ImageOnly => FusionMode::ImageOnly,
            FusionArg::BilstmAtt => FusionMode::BilstmAtt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum BaselineArg {
    MostFrequent,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PromptModeArg {
    ZeroShot,
    FewShot,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CROSSCUE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenCorpus(a) => cmd_gen_corpus(config, a),
        Command::Label(a) => cmd_label(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(config, a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Prompt(a) => cmd_prompt(a),
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn read_corpus(path: &Path) -> Result<Vec<Post>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn read_split(path: &Path) -> Result<SplitSpec> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading split {}", path.display()))?;
    serde_json::from_str(&content).with_context(|| format!("parsing split {}", path.display()))
}

fn corpus_dir(corpus: &Path) -> PathBuf {
    corpus.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn image_dir(corpus: &Path, images: Option<&Path>) -> ImageDir {
    ImageDir::new(images.map(Path::to_path_buf).unwrap_or_else(|| corpus_dir(corpus)))
}

fn emit(report: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report)? + "\n";
    if let Some(path) = out {
        write_text(path, &json)?;
    }
    print!("{json}");
    Ok(())
}

fn cmd_gen_corpus(mut config: CliConfig, a: GenCorpusArgs) -> Result<()> {
    let c = &mut config.corpus;
    c.seed = a.seed.unwrap_or(c.seed);
    c.n_accounts = a.accounts.unwrap_or(c.n_accounts);
    c.posts_per_account = a.posts_per_account.unwrap_or(c.posts_per_account);
    c.commercial_rate = a.commercial_rate.unwrap_or(c.commercial_rate);
    c.text_only_per_account = a.text_only_per_account.unwrap_or(c.text_only_per_account);
    c.undisclosed_rate = a.undisclosed_rate.unwrap_or(c.undisclosed_rate);
    info!("resolved config:\n{}", config.render()?);
    let corpus = generate_synthetic_corpus(&config.corpus.to_synthetic())?;
    corpus
        .write_to(&a.out)
        .with_context(|| format!("writing corpus to {}", a.out.display()))?;
    info!("wrote {} posts to {}", corpus.posts.len(), a.out.display());
    Ok(())
}

fn cmd_label(a: LabelArgs) -> Result<()> {
    let rules = match &a.rules {
        Some(p) => RuleSet::load(p).with_context(|| format!("loading rules {}", p.display()))?,
        None => RuleSet::default(),
    };
    let posts = read_corpus(&a.corpus)?;
    let (mut labeled, summary) = label_corpus(&posts, &rules, a.seed);
    // Keep image references valid from the new location.
    let source_dir = fs::canonicalize(corpus_dir(&a.corpus)).unwrap_or_else(|_| corpus_dir(&a.corpus));
    for post in &mut labeled {
        if let Some(rel) = &post.image {
            post.image = Some(source_dir.join(rel).to_string_lossy().into_owned());
        }
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_corpus(a.out.join(CORPUS_FILE), &labeled)?;
    info!(
        "labeled {} posts: {} commercial, {} non-commercial",
        summary.posts_out, summary.commercial, summary.non_commercial
    );
    emit(&summary, Some(&a.out.join(SUMMARY_FILE)))
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let posts = read_corpus(&a.corpus)?;
    let mut split = split_by_account(&posts, DEFAULT_SPLIT_RATIOS, a.seed)?;
    split.text_only_test_ids = make_text_only_test(&posts, &split, a.seed);
    for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
        info!(
            "{name:?}: {} accounts, {} text-image posts",
            split.accounts(name).len(),
            split.select(&posts, name).len()
        );
    }
    info!("text-only test posts: {}", split.text_only_test_ids.len());
    write_text(&a.out, &(serde_json::to_string_pretty(&split)? + "\n"))
}

fn predictions_tsv(ids: &[String], labels: &[Label]) -> String {
    let mut out = String::from("id\tlabel\n");
    for (id, l) in ids.iter().zip(labels) {
        out.push_str(&format!("{id}\t{l}\n"));
    }
    out
}

fn cmd_train(mut config: CliConfig, a: TrainArgs) -> Result<()> {
    if let Some(f) = a.fusion {
        config.model.fusion = f.into();
    }
    if let Some(s) = a.seed {
        config.train.seed = s;
    }
    if let Some(e) = a.epochs {
        config.train.max_epochs = e;
    }
    let posts = read_corpus(&a.data.corpus)?;
    let split = read_split(&a.data.split)?;
    let images = image_dir(&a.data.corpus, a.data.images.as_deref());
    let test_set: TestSet = a.data.test_set.into();

    let seeds = if a.seeds.is_empty() { vec![config.train.seed] } else { a.seeds.clone() };
    let mut flats = Vec::new();
    for &seed in &seeds {
        let mut run_config = config.clone();
        run_config.train.seed = seed;
        info!("resolved config:\n{}", run_config.render()?);
        let dir = if a.seeds.is_empty() { a.out.clone() } else { a.out.join(format!("seed_{seed}")) };
        let result = run_experiment(
            &posts,
            &split,
            &images,
            &run_config.model,
            &run_config.train,
            test_set,
        )?;
        let metrics = metrics_json(&result, test_set, seed)?;
        write_run_dir(&dir, &result, &run_config.train, &metrics)?;
        write_text(
            &dir.join(PREDICTIONS_FILE),
            &predictions_tsv(&result.test_ids, &result.test_predictions),
        )?;
        let pct = result.test_report.to_percent();
        info!(
            "seed {seed}: best epoch {}, test weighted F1 {:.2}, P {:.2}, R {:.2}",
            result.outcome.history.best_epoch, pct.weighted.f1, pct.weighted.precision, pct.weighted.recall
        );
        flats.push(pct.flat());
    }
    if seeds.len() > 1 {
        let agg = aggregate_runs(&flats)?;
        emit(&agg, Some(&a.out.join(AGGREGATE_FILE)))?;
    }
    Ok(())
}

fn read_label_file(path: &Path) -> Result<Vec<(String, String)>> {
    let content = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() || (idx == 0 && line.starts_with("id\t")) {
            continue;
        }
        let Some((id, value)) = line.split_once('\t') else {
            bail!("{}:{}: expected id<TAB>value", path.display(), idx + 1);
        };
        rows.push((id.to_string(), value.to_string()));
    }
    Ok(rows)
}

fn read_predictions(path: &Path) -> Result<Vec<(String, Label)>> {
    read_label_file(path)?
        .into_iter()
        .map(|(id, v)| {
            let label = Label::parse(v.trim()).with_context(|| {
                format!("{}: unknown label {v:?} for {id}", path.display())
            })?;
            Ok((id, label))
        })
        .collect()
}

fn posts_by_id(posts: &[Post]) -> BTreeMap<&str, &Post> {
    posts.iter().map(|p| (p.id.as_str(), p)).collect()
}

fn gold_of(post: &Post) -> Result<Label> {
    post.gold_label
        .with_context(|| format!("post {} has no gold label", post.id))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let modes = [a.predictions.is_some(), a.run.is_some(), a.baseline.is_some()];
    ensure!(
        modes.iter().filter(|m| **m).count() == 1,
        "choose exactly one of --predictions, --run or --baseline"
    );
    let test_set: TestSet = a.test_set.into();
    let report: EvalReport = if let Some(path) = &a.predictions {
        let corpus = a.corpus.as_deref().context("--predictions needs --corpus")?;
        let posts = read_corpus(corpus)?;
        let by_id = posts_by_id(&posts);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for (id, label) in read_predictions(path)? {
            let post = by_id.get(id.as_str()).with_context(|| format!("unknown post id {id}"))?;
            gold.push(gold_of(post)?);
            pred.push(label);
        }
        evaluate(&gold, &pred)?
    } else if let Some(run) = &a.run {
        let (Some(corpus), Some(split)) = (&a.corpus, &a.split) else {
            bail!("--run needs --corpus and --split");
        };
        let params = ModelParams::load(run.join(CHECKPOINT_FILE), None)?;
        let vocab = Vocab::load(run.join(VOCAB_FILE))?;
        let posts = read_corpus(corpus)?;
        let split = read_split(split)?;
        let test = test_posts(&posts, &split, test_set);
        let images = image_dir(corpus, a.images.as_deref());
        let examples =
            build_examples(test.iter().copied(), LabelSource::Gold, &vocab, &params.config, &images)?;
        let pred = predict_labels(&params, &examples)?;
        let gold: Vec<Label> = examples.iter().map(|e| e.label).collect();
        let ids: Vec<String> = test.iter().map(|p| p.id.clone()).collect();
        if let Some(out) = &a.out {
            write_text(&out.with_extension("predictions.tsv"), &predictions_tsv(&ids, &pred))?;
        }
        evaluate(&gold, &pred)?
    } else {
        let (train, gold) = if !a.train_counts.is_empty() || !a.gold_counts.is_empty() {
            ensure!(
                a.train_counts.len() == 2 && a.gold_counts.len() == 2,
                "--train-counts and --gold-counts are both required as nc,c"
            );
            (
                labels_from_counts([a.train_counts[0], a.train_counts[1]]),
                labels_from_counts([a.gold_counts[0], a.gold_counts[1]]),
            )
        } else {
            let (Some(corpus), Some(split)) = (&a.corpus, &a.split) else {
                bail!("--baseline needs --corpus and --split, or --train-counts and --gold-counts");
            };
            let posts = read_corpus(corpus)?;
            let split = read_split(split)?;
            let train: Vec<Label> = split
                .select(&posts, SplitName::Train)
                .iter()
                .map(|p| p.weak_label.with_context(|| format!("post {} has no weak label", p.id)))
                .collect::<Result<_>>()?;
            let gold: Vec<Label> = test_posts(&posts, &split, test_set)
                .iter()
                .map(|p| gold_of(p))
                .collect::<Result<_>>()?;
            (train, gold)
        };
        info!("most-frequent baseline: train counts {:?}", label_counts(train.iter().copied()));
        most_frequent_baseline(&train, &gold)?
    };
    emit(&report.to_percent(), a.out.as_deref())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let posts = read_corpus(&a.corpus)?;
    let by_id = posts_by_id(&posts);
    let mut ids = Vec::new();
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut weak = Vec::new();
    for (id, label) in read_predictions(&a.predictions)? {
        let post = by_id.get(id.as_str()).with_context(|| format!("unknown post id {id}"))?;
        gold.push(gold_of(post)?);
        weak.push(post.weak_label.with_context(|| format!("post {id} has no weak label"))?);
        pred.push(label);
        ids.push(id);
    }
    emit(&analyze(&ids, &pred, &gold, &weak)?, a.out.as_deref())
}

#[derive(serde::Serialize)]
struct PromptScore {
    parse_failures: usize,
    report: EvalReport,
}

fn cmd_prompt(a: PromptArgs) -> Result<()> {
    let posts = read_corpus(&a.data.corpus)?;
    let split = read_split(&a.data.split)?;
    let test = test_posts(&posts, &split, a.data.test_set.into());

    if let Some(path) = &a.responses {
        let by_id = posts_by_id(&posts);
        let test_ids: BTreeSet<&str> = test.iter().map(|p| p.id.as_str()).collect();
        let rows = read_label_file(path)?;
        let mut gold = Vec::new();
        let mut responses = Vec::new();
        for (id, response) in rows {
            ensure!(test_ids.contains(id.as_str()), "response for {id}, which is not a test post");
            gold.push(gold_of(by_id[id.as_str()])?);
            responses.push(response);
        }
        let (pred, parse_failures) = parse_responses(&responses, DEFAULT_FALLBACK);
        let report = evaluate(&gold, &pred)?.to_percent();
        return emit(&PromptScore { parse_failures, report }, a.out.as_deref());
    }

    let template = match a.mode {
        PromptModeArg::ZeroShot => PromptTemplate::zero_shot(),
        PromptModeArg::FewShot => {
            let pool: Vec<(String, Label)> = split
                .select(&posts, SplitName::Train)
                .iter()
                .filter_map(|p| p.weak_label.map(|l| (p.text.clone(), l)))
                .collect();
            PromptTemplate::few_shot(sample_shots(&pool, a.seed)?)?
        }
    };
    let mut out = String::new();
    for post in &test {
        let record = serde_json::json!({ "id": post.id, "prompt": render_prompt(&template, &post.text)? });
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    match &a.out {
        Some(path) => write_text(path, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
