use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use emodiff_core::annotate::{AnnotationStore, Annotator};
use emodiff_core::classifier::{
    build_emoji_dataset, EmojiDatasetSpec, LabelDef, ModelFile, PredictionFile, Provenance, ReadOptions, TrainConfig,
    NO_EMOJI_LABEL,
};
use emodiff_core::diffusion::EmojiCounts;
use emodiff_core::interpret::{
    aggregate_salience, new_emojis_in, surrogate_rank, surrogate_rank_from_predictions, SalienceOptions,
    SurrogateOptions,
};
use emodiff_core::output::json_with_header;
use emodiff_core::pipeline::{accuracy, predict_parallel, ModelMetrics};
use emodiff_core::substitute::{build_sentiment_dataset, default_groups, evaluate as evaluate_report};
use emodiff_core::{
    Classifier, Corpus, EmojiId, EmojiStatus, Granularity, LabeledDataset, Lexicon, Mode, NaiveBayes, OutputHeader,
    SubstitutionPolicy, SurrogateReport, TargetSet, TokenizedPost, VersionCutoff,
};
use serde::Serialize;

use crate::annotate::Backend;
use crate::{emit, jsonl_with_header, split_list, Ctx};

fn read_dataset(path: &Path, label_space: Option<Vec<String>>, provenance: Provenance) -> Result<LabeledDataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    LabeledDataset::read_jsonl(BufReader::new(f), label_space, provenance)
        .with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<NaiveBayes> {
    NaiveBayes::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_surrogates(path: &Path) -> Result<SurrogateReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a surrogate ranking", path.display()))
}

fn write_model(path: Option<&Path>, header: &OutputHeader, file: &ModelFile) -> Result<()> {
    emit(path, &json_with_header(header, file))
}

fn metrics(model: &NaiveBayes, data: &LabeledDataset, seed: u64, threads: usize) -> ModelMetrics {
    let split = data.split(seed);
    ModelMetrics {
        label_space: data.label_space.clone(),
        class_counts: data.class_counts(),
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
        validation_accuracy: accuracy(&predict_parallel(model, &split.validation, false, threads), &split.validation),
        test_accuracy: accuracy(&predict_parallel(model, &split.test, false, threads), &split.test),
    }
}

fn write_split(dir: &Path, header: &OutputHeader, data: &LabeledDataset, seed: u64) -> Result<()> {
    let split = data.split(seed);
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        emit(Some(&dir.join(format!("{name}.jsonl"))), &jsonl_with_header(header, &part.items))?;
    }
    Ok(())
}

fn new_surfaces(lexicon: &Lexicon, cutoff: VersionCutoff) -> HashSet<String> {
    lexicon.iter().filter(|e| e.is_base() && cutoff.is_new(e)).map(|e| e.render()).collect()
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1.0, global = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    #[arg(long, default_value_t = 1, global = true)]
    #[serde(skip)]
    threads: usize,
    /// Model file (JSON); stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Validation and test accuracy (JSON).
    #[arg(long, global = true)]
    #[serde(skip)]
    metrics: Option<PathBuf>,
    #[command(subcommand)]
    source: TrainSource,
}

#[derive(Debug, Subcommand, Serialize)]
enum TrainSource {
    /// Emoji prediction: each post labeled by the emoji it contains.
    Emoji {
        #[arg(long)]
        corpus: PathBuf,
        /// Label emojis (repeatable or comma-separated); the most frequent old emojis when absent.
        #[arg(long)]
        label: Vec<String>,
        /// How many labels to pick without --label.
        #[arg(long, default_value_t = 8)]
        top: usize,
        /// Leave out the class of posts without emojis.
        #[arg(long)]
        skip_no_emoji: bool,
        /// Allow post-cutoff emojis as labels.
        #[arg(long)]
        allow_new: bool,
        #[arg(long, default_value = "12.1")]
        cutoff: VersionCutoff,
        #[arg(long)]
        cap: Option<usize>,
        /// Also write train/validation/test JSON Lines here.
        #[arg(long)]
        #[serde(skip)]
        split_dir: Option<PathBuf>,
    },
    /// Sentiment from two-pass annotations; trains on posts without new emojis.
    Sentiment {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        backend: Backend,
        #[arg(long, default_value = "12.1")]
        cutoff: VersionCutoff,
        /// Annotate at most this many old-emoji posts (seeded sample).
        #[arg(long)]
        sample: Option<usize>,
        /// Agreed posts containing new emojis, for `evaluate --data`.
        #[arg(long)]
        #[serde(skip)]
        test_out: Option<PathBuf>,
    },
    /// A labeled dataset in JSON Lines.
    Data {
        #[arg(long)]
        data: PathBuf,
        /// Train on the 8:1:1 train split only.
        #[arg(long)]
        split: bool,
    },
}

pub fn train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let header = OutputHeader::for_args(&args, args.seed);
    let cfg = TrainConfig { alpha: args.alpha, seed: args.seed };
    let (train_data, all) = match &args.source {
        TrainSource::Emoji { corpus, label, top, skip_no_emoji, allow_new, cutoff, cap, split_dir } => {
            let corpus = ctx.corpus(corpus)?;
            let labels: Vec<EmojiId> = match split_list(label) {
                l if l.is_empty() => EmojiCounts::count(corpus.iter(), Granularity::Month, &ctx.lexicon)
                    .most_frequent()
                    .into_iter()
                    .map(|e| e.0)
                    .filter(|&e| ctx.lexicon.classify(e, *cutoff) == EmojiStatus::Old)
                    .take(*top)
                    .collect(),
                l => ctx.emojis(&l)?,
            };
            if !allow_new {
                if let Some(&e) = labels.iter().find(|&&e| ctx.lexicon.classify(e, *cutoff) == EmojiStatus::New) {
                    bail!("label {} is new under cutoff {}; pass --allow-new", ctx.lexicon.render(e), cutoff.0);
                }
            }
            let mut defs: Vec<LabelDef> = labels.into_iter().map(LabelDef::Emoji).collect();
            if !skip_no_emoji {
                defs.push(LabelDef::NoEmoji);
            }
            let provenance = if *allow_new { Provenance::EmojiPrediction } else { Provenance::OldEmoji };
            let spec =
                EmojiDatasetSpec { labels: defs, cutoff: *cutoff, cap_per_class: *cap, seed: args.seed, provenance };
            let data = build_emoji_dataset(&corpus, &spec, &ctx.lexicon)?;
            if let Some(dir) = split_dir {
                write_split(dir, &header, &data, args.seed)?;
            }
            (data.split(args.seed).train, Some(data))
        }
        TrainSource::Sentiment { corpus, backend, cutoff, sample, test_out } => {
            let corpus = ctx.corpus(corpus)?;
            let new = new_surfaces(&ctx.lexicon, *cutoff);
            let has_new = |p: &TokenizedPost| p.emojis(&ctx.lexicon).any(|e| new.contains(&ctx.lexicon.render(e)));
            let mut old: Vec<&TokenizedPost> = corpus.iter().filter(|p| !has_new(p)).collect();
            if let Some(n) = sample {
                old = sample_posts(old, *n, args.seed);
            }
            let with_new: Vec<&TokenizedPost> = corpus.iter().filter(|p| has_new(p)).collect();
            let wanted: Vec<&TokenizedPost> =
                old.iter().copied().chain(if test_out.is_some() { with_new.clone() } else { vec![] }).collect();
            let store = backend.store()?;
            let completion = backend.completion()?;
            let annotator = backend.annotator(&store, completion.as_deref(), args.threads);
            let annotations = annotator.annotate_posts(&wanted)?;
            let (data, tally) = build_sentiment_dataset(wanted.iter().copied(), &annotations, &ctx.lexicon);
            eprintln!(
                "{} agreed, {} disagreed, {} unannotated; {} backend calls",
                tally.kept,
                tally.disagreed,
                tally.missing,
                annotator.calls()
            );
            let is_test = |tokens: &[String]| tokens.iter().any(|t| new.contains(t));
            let train = LabeledDataset {
                label_space: data.label_space.clone(),
                provenance: data.provenance,
                items: data.items.iter().filter(|it| !is_test(&it.tokens)).cloned().collect(),
            };
            if let Some(p) = test_out {
                let test: Vec<_> = data.items.iter().filter(|it| is_test(&it.tokens)).collect();
                emit(Some(p), &jsonl_with_header(&header, test))?;
            }
            (train, None)
        }
        TrainSource::Data { data, split } => {
            let data = read_dataset(data, None, Provenance::EmojiPrediction)?;
            if *split {
                (data.split(args.seed).train, Some(data))
            } else {
                (data, None)
            }
        }
    };
    let model = NaiveBayes::train(&train_data, cfg)?;
    if let Some(p) = &args.metrics {
        let Some(all) = &all else { bail!("--metrics needs a split: use `train emoji` or `train data --split`") };
        emit(Some(p), &json_with_header(&header, &metrics(&model, all, args.seed, args.threads)))?;
    }
    write_model(args.out.as_deref(), &header, model.file())
}

fn sample_posts(mut posts: Vec<&TokenizedPost>, n: usize, seed: u64) -> Vec<&TokenizedPost> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if posts.len() <= n {
        return posts;
    }
    let mut idx: Vec<usize> = (0..posts.len()).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    let keep: HashSet<usize> = idx.into_iter().collect();
    let mut i = 0;
    posts.retain(|_| {
        i += 1;
        keep.contains(&(i - 1))
    });
    posts
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for train.jsonl, validation.jsonl and test.jsonl.
    #[arg(long)]
    #[serde(skip)]
    out_dir: PathBuf,
}

pub fn split(args: SplitArgs) -> Result<()> {
    let data = read_dataset(&args.data, None, Provenance::EmojiPrediction)?;
    write_split(&args.out_dir, &OutputHeader::for_args(&args, args.seed), &data, args.seed)
}

/// A labeled dataset from a file, or the new-emoji target posts of a corpus.
#[derive(Debug, Args, Serialize)]
struct Items {
    /// Labeled items in JSON Lines.
    #[arg(long, conflicts_with = "corpus")]
    data: Option<PathBuf>,
    /// Posts; items are the posts containing the --target emojis, with new emojis removed.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// New emojis to collect from --corpus; every new emoji with --min-posts posts when absent.
    #[arg(long)]
    target: Vec<String>,
    #[arg(long, default_value_t = 20)]
    min_posts: usize,
    #[arg(long, default_value = "12.1")]
    cutoff: VersionCutoff,
}

impl Items {
    fn targets(&self, ctx: &Ctx, corpus: &Corpus) -> Result<TargetSet> {
        let ids = match split_list(&self.target) {
            l if l.is_empty() => new_emojis_in(corpus, self.cutoff, self.min_posts, &ctx.lexicon),
            l => ctx.emojis(&l)?,
        };
        if let Some(&e) = ids.iter().find(|&&e| ctx.lexicon.classify(e, self.cutoff) == EmojiStatus::Old) {
            bail!("{} is not new under cutoff {}", ctx.lexicon.render(e), self.cutoff.0);
        }
        if ids.is_empty() {
            bail!("no new emoji has at least {} posts", self.min_posts);
        }
        Ok(TargetSet::build(corpus, &ids, self.cutoff, &ctx.lexicon))
    }

    fn load(&self, ctx: &Ctx, label_space: Option<Vec<String>>) -> Result<LabeledDataset> {
        match (&self.data, &self.corpus) {
            (Some(d), _) => read_dataset(d, label_space, Provenance::EmojiPrediction),
            (None, Some(c)) => Ok(self.targets(ctx, &ctx.corpus(c)?)?.to_dataset()),
            (None, None) => bail!("give --data or --corpus"),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    items: Items,
    /// Include per-token salience.
    #[arg(long)]
    salience: bool,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    threads: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn predict(ctx: &Ctx, args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = args.items.load(ctx, None)?;
    let preds = predict_parallel(&model, &data, args.salience, args.threads);
    let mut buf = Vec::new();
    preds.write(&mut buf, Some(&OutputHeader::for_args(&args, 0).comment()))?;
    emit(args.out.as_deref(), &buf)
}

#[derive(Debug, Args, Serialize)]
pub struct SalienceArgs {
    /// Prediction file with salience (from `predict --salience` or an external model).
    #[arg(long, required_unless_present = "model")]
    predictions: Option<PathBuf>,
    /// Predict in-process instead of reading --predictions.
    #[arg(long, conflicts_with = "predictions")]
    model: Option<PathBuf>,
    /// The items the predictions refer to.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Tokens seen fewer times under a label are not ranked.
    #[arg(long, default_value_t = 10)]
    min_occurrences: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn salience(args: SalienceArgs) -> Result<()> {
    let data = read_dataset(&args.data, None, Provenance::EmojiPrediction)?;
    let preds = match (&args.predictions, &args.model) {
        (_, Some(m)) => predict_parallel(&load_model(m)?, &data, true, 1),
        (Some(p), None) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let (file, errors) = PredictionFile::read(f, Some(&data), &ReadOptions::default())?;
            for e in &errors {
                eprintln!("skipped: {e}");
            }
            file
        }
        (None, None) => bail!("give --predictions or --model"),
    };
    let opts = SalienceOptions { min_occurrences: args.min_occurrences, top_k: args.top };
    let table = aggregate_salience(&data, &preds, &opts)?;
    for d in &table.diagnostics {
        eprintln!("{d}");
    }
    emit(args.out.as_deref(), &json_with_header(&OutputHeader::for_args(&args, 0), &table))
}

#[derive(Debug, Args, Serialize)]
pub struct SurrogatesArgs {
    /// Old-emoji model.
    #[arg(long, required_unless_present = "predictions")]
    model: Option<PathBuf>,
    /// Predictions of an external old-emoji model on the target posts.
    #[arg(long, conflicts_with = "model")]
    predictions: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    /// New emojis (repeatable or comma-separated); every new emoji with --min-posts posts when absent.
    #[arg(long)]
    new: Vec<String>,
    #[arg(long, default_value_t = 20)]
    min_posts: usize,
    #[arg(long, default_value = "12.1")]
    cutoff: VersionCutoff,
    /// Surrogates per new emoji.
    #[arg(long, default_value_t = 3)]
    top: usize,
    /// Let the no-emoji label be a surrogate.
    #[arg(long)]
    allow_no_emoji: bool,
    /// Also write the target posts (new emojis removed) as labeled items.
    #[arg(long)]
    #[serde(skip)]
    targets_out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn surrogates(ctx: &Ctx, args: SurrogatesArgs) -> Result<()> {
    if args.top == 0 {
        bail!("--top must be at least 1");
    }
    let corpus = ctx.corpus(&args.corpus)?;
    let items = Items {
        data: None,
        corpus: Some(args.corpus.clone()),
        target: args.new.clone(),
        min_posts: args.min_posts,
        cutoff: args.cutoff,
    };
    let targets = items.targets(ctx, &corpus)?;
    let opts = SurrogateOptions {
        top_n: args.top,
        exclude: if args.allow_no_emoji { vec![] } else { vec![NO_EMOJI_LABEL.to_string()] },
    };
    let report = match (&args.model, &args.predictions) {
        (Some(m), _) => surrogate_rank(&load_model(m)?, &targets, Some(args.cutoff), &ctx.lexicon, &opts)?,
        (None, Some(p)) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let (file, errors) = PredictionFile::read(f, None, &ReadOptions::default())?;
            for e in &errors {
                eprintln!("skipped: {e}");
            }
            surrogate_rank_from_predictions(&file, &targets, Some(args.cutoff), &ctx.lexicon, &opts)?
        }
        (None, None) => bail!("give --model or --predictions"),
    };
    for d in &report.diagnostics {
        eprintln!("{d}");
    }
    for r in &report.rankings {
        let top: Vec<String> = r.rows.iter().take(4).map(|x| format!("{} {:.3}", x.emoji, x.score)).collect();
        eprintln!("{} ({} posts): {}", r.new_emoji, r.denominator, top.join(", "));
    }
    let header = OutputHeader::for_args(&args, 0);
    if let Some(p) = &args.targets_out {
        emit(Some(p), &jsonl_with_header(&header, &targets.to_dataset().items))?;
    }
    emit(args.out.as_deref(), &json_with_header(&header, &report))
}

/// Surrogate ranking plus the policy switches shared by `substitute` and `evaluate`.
#[derive(Debug, Args, Serialize)]
struct PolicyArgs {
    /// Surrogate ranking JSON from `surrogates`.
    #[arg(long)]
    surrogates: Option<PathBuf>,
    #[arg(long, default_value = "12.1")]
    cutoff: VersionCutoff,
    /// Leave new emojis without a mapping in place instead of failing.
    #[arg(long)]
    lenient: bool,
}

impl PolicyArgs {
    fn load(&self, ctx: &Ctx) -> Result<(SubstitutionPolicy, Option<SurrogateReport>)> {
        let report = self.surrogates.as_deref().map(load_surrogates).transpose()?;
        let map = report.as_ref().map(SurrogateReport::surrogate_map).unwrap_or_default();
        let policy = SubstitutionPolicy::new(&ctx.lexicon, self.cutoff, map)?.lenient(self.lenient);
        Ok((policy, report))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SubstituteArgs {
    #[arg(long, default_value = "surrogates")]
    policy: Mode,
    #[command(flatten)]
    rules: PolicyArgs,
    /// Texts to rewrite (repeatable).
    #[arg(long, required_unless_present_any = ["data", "corpus"])]
    text: Vec<String>,
    /// Labeled items to rewrite.
    #[arg(long, conflicts_with_all = ["text", "corpus"])]
    data: Option<PathBuf>,
    /// Posts to rewrite; writes labeled-item lines with an empty label.
    #[arg(long, conflicts_with = "text")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Rewritten<'a> {
    id: &'a str,
    tokens: Vec<String>,
    label: &'a str,
}

pub fn substitute(ctx: &Ctx, args: SubstituteArgs) -> Result<()> {
    let (policy, report) = args.rules.load(ctx)?;
    if report.is_none() && args.policy == Mode::Surrogates {
        bail!("--policy surrogates needs --surrogates");
    }
    let header = OutputHeader::for_args(&args, 0);
    let features =
        |p: &TokenizedPost| -> Vec<String> { p.tokens.iter().map(|t| t.feature(&ctx.lexicon).into_owned()).collect() };
    if let Some(d) = &args.data {
        let data = read_dataset(d, None, Provenance::Sentiment)?;
        let mut rows = Vec::new();
        for it in &data.items {
            rows.push(Rewritten { id: &it.id, tokens: policy.substitute(&it.tokens, args.policy)?, label: &it.label });
        }
        return emit(args.out.as_deref(), &jsonl_with_header(&header, rows));
    }
    if let Some(c) = &args.corpus {
        let corpus = ctx.corpus(c)?;
        let mut rows = Vec::new();
        for p in corpus.iter() {
            rows.push(Rewritten { id: p.id(), tokens: policy.substitute(&features(p), args.policy)?, label: "" });
        }
        return emit(args.out.as_deref(), &jsonl_with_header(&header, rows));
    }
    let mut out = format!("# {}\n", header.comment());
    for t in &args.text {
        let post = TokenizedPost::new(
            emodiff_core::Post { id: String::new(), created_at: Default::default(), text: t.clone(), lang: None },
            &ctx.lexicon,
        );
        out += &policy.substitute(&features(&post), args.policy)?.join(" ");
        out.push('\n');
    }
    emit(args.out.as_deref(), out.as_bytes())
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Sentiment model trained without new emojis.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    rules: PolicyArgs,
    /// Sentiment-labeled test items (from `train sentiment --test-out`).
    #[arg(long, required_unless_present = "corpus")]
    data: Option<PathBuf>,
    /// Posts to label from the annotation store instead of --data.
    #[arg(long, conflicts_with = "data")]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    backend: Backend,
    /// JSON object mapping emoji to group name for pooled rows.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    threads: usize,
    /// CSV report; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    report: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    #[serde(skip)]
    json: Option<PathBuf>,
}

pub fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (policy, report) = args.rules.load(ctx)?;
    let report = report.context("evaluate needs --surrogates")?;
    let test = match (&args.data, &args.corpus) {
        (Some(d), _) => read_dataset(d, Some(model.label_space().to_vec()), Provenance::Sentiment)?,
        (None, Some(c)) => {
            let corpus = ctx.corpus(c)?;
            let posts: Vec<&TokenizedPost> =
                corpus.iter().filter(|p| p.tokens.iter().any(|t| policy.is_new(&t.feature(&ctx.lexicon)))).collect();
            let store = args.backend.store()?;
            let completion = args.backend.completion()?;
            let annotator = args.backend.annotator(&store, completion.as_deref(), args.threads);
            let annotations = annotator.annotate_posts(&posts)?;
            build_sentiment_dataset(posts.iter().copied(), &annotations, &ctx.lexicon).0
        }
        (None, None) => bail!("give --data or --corpus"),
    };
    let groups: BTreeMap<String, String> = match &args.groups {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => default_groups(),
    };
    let targets: Vec<String> = report.rankings.iter().map(|r| r.new_emoji.clone()).collect();
    let eval = evaluate_report(&model, &test, &targets, &policy, &groups)?;
    for d in &eval.diagnostics {
        eprintln!("{d}");
    }
    let header = OutputHeader::for_args(&args, 0);
    if let Some(p) = &args.json {
        emit(Some(p), &json_with_header(&header, &eval))?;
    }
    let mut csv = Vec::new();
    eval.write_csv(&mut csv, Some(&header.comment()))?;
    emit(args.report.as_deref(), &csv)
}

impl Backend {
    pub fn store(&self) -> Result<AnnotationStore> {
        match &self.store {
            Some(p) if p.exists() || !self.offline => {
                AnnotationStore::open(p).with_context(|| format!("opening {}", p.display()))
            }
            Some(p) => bail!("annotation store {} does not exist", p.display()),
            None if self.offline => bail!("--offline needs --store"),
            None => Ok(AnnotationStore::in_memory()),
        }
    }

    pub fn annotator<'a>(
        &self,
        store: &'a AnnotationStore,
        completion: Option<&'a dyn emodiff_core::annotate::Completion>,
        threads: usize,
    ) -> Annotator<'a> {
        match completion {
            Some(c) => Annotator::online(store, c, threads),
            None => {
                let mut a = Annotator::offline(store);
                a.concurrency = threads.max(1);
                a
            }
        }
    }
}
