//! End-to-end runs: ingest, diffusion statistics, the old-emoji model,
//! surrogate ranking, salience, the sentiment model and the substitution
//! evaluation, each writing header-stamped artifacts and a MANIFEST.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotationStore, Annotator, Completion};
use crate::classifier::{
    build_emoji_dataset, Classifier, EmojiDatasetSpec, LabelDef, LabeledDataset, NaiveBayes, PredictionFile,
    PredictionRow, Provenance, TrainConfig,
};
use crate::corpus::{ingest, Corpus, Granularity, IngestOptions, TokenizedPost};
use crate::diffusion::{
    correlate, load_appendix, proxy_pairs, series_from_counts, version_stages, AppendixRow, CorrelationMethod,
    EmojiCounts, StageOffsets,
};
use crate::interpret::{
    aggregate_salience, interpretation_rows, new_emojis_in, surrogate_rank, SalienceOptions, SurrogateOptions,
    SurrogateReport, TargetSet,
};
use crate::lexicon::{EmojiId, EmojiStatus, EmojiVersion, Lexicon, VersionCutoff};
use crate::output::{csv_with_header, digest_json, json_with_header, sha256_hex, OutputHeader};
use crate::substitute::{build_sentiment_dataset, default_groups, evaluate, SubstitutionPolicy};

pub const MANIFEST: &str = "MANIFEST.json";

fn default_cutoff() -> VersionCutoff {
    "12.1".parse().expect("valid cutoff")
}
fn month() -> Granularity {
    Granularity::Month
}
fn ten() -> usize {
    10
}
fn ten_u64() -> u64 {
    10
}
fn eight() -> usize {
    8
}
fn three() -> usize {
    3
}
fn twenty() -> usize {
    20
}
fn one() -> f64 {
    1.0
}
fn one_thread() -> usize {
    1
}
fn yes() -> bool {
    true
}

/// One JSON file. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Emojis released after this version are new.
    #[serde(default = "default_cutoff")]
    pub cutoff: VersionCutoff,
    #[serde(default = "month")]
    pub granularity: Granularity,
    #[serde(default)]
    pub stages: StageOffsets,
    /// Reference count tables, one per emoji version.
    #[serde(default)]
    pub appendix: Vec<PathBuf>,
    #[serde(default = "ten")]
    pub trend_top: usize,
    /// Old-emoji labels; the most frequent `old_label_count` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_labels: Option<Vec<String>>,
    #[serde(default = "eight")]
    pub old_label_count: usize,
    /// New emojis to interpret; every new emoji with at least
    /// `min_new_posts` posts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_emojis: Option<Vec<String>>,
    #[serde(default = "twenty")]
    pub min_new_posts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_per_class: Option<usize>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "ten_u64")]
    pub min_occurrences: u64,
    #[serde(default = "ten")]
    pub salience_top: usize,
    #[serde(default = "three")]
    pub surrogates_top: usize,
    /// Annotation store for sentiment labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(default = "yes")]
    pub offline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Old-slice posts sampled for sentiment annotation; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_sample: Option<usize>,
    /// Emoji → group for pooled accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub lenient: bool,
    #[serde(default = "one_thread")]
    pub threads: usize,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String, manifest: Box<Manifest> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        serde_json::from_value(serde_json::json!({ "output_dir": output_dir.into() })).expect("defaults")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut c: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve(base);
        Ok(c)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.iter_mut().for_each(fix);
        self.lexicon.iter_mut().for_each(fix);
        self.annotations.iter_mut().for_each(fix);
        self.appendix.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    /// Covers everything but the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        digest_json(&c)
    }

    pub fn header(&self) -> OutputHeader {
        OutputHeader::new(self.digest(), self.seed)
    }

    pub fn validate(&self, kind: PipelineKind) -> Result<(), PipelineError> {
        let mut problems = Vec::new();
        let mut exists = |what: &str, p: &Path| {
            if !p.exists() {
                problems.push(format!("{what} {} does not exist", p.display()));
            }
        };
        if let Some(p) = &self.corpus {
            exists("corpus", p);
        }
        if let Some(p) = &self.lexicon {
            exists("lexicon", p);
        }
        for p in &self.appendix {
            exists("appendix", p);
        }
        let stages = kind.stages();
        if stages.contains(&Stage::SentimentModel) {
            match &self.annotations {
                Some(p) if self.offline => exists("annotations", p),
                None if self.offline => problems.push("offline sentiment stages need `annotations`".into()),
                _ => {}
            }
        }
        if self.corpus.is_none() && stages.iter().any(|s| *s != Stage::Ingest && *s != Stage::Diffusion) {
            problems.push("`corpus` is required".into());
        }
        if self.corpus.is_none() && self.appendix.is_empty() {
            problems.push("nothing to do: no corpus and no appendix tables".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.threads == 0 {
            problems.push("threads must be at least 1".into());
        }
        if self.surrogates_top == 0 {
            problems.push("surrogates_top must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Diffusion,
    Interpret,
    SubstituteEval,
    Full,
}

impl PipelineKind {
    pub fn stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            PipelineKind::Diffusion => &[Ingest, Diffusion],
            PipelineKind::Interpret => &[Ingest, OldModel, Surrogates, Salience],
            PipelineKind::SubstituteEval => &[Ingest, OldModel, Surrogates, SentimentModel, Evaluation],
            PipelineKind::Full => &[Ingest, Diffusion, OldModel, Surrogates, Salience, SentimentModel, Evaluation],
        }
    }
}

impl FromStr for PipelineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diffusion" => Ok(PipelineKind::Diffusion),
            "interpret" => Ok(PipelineKind::Interpret),
            "substitute-eval" => Ok(PipelineKind::SubstituteEval),
            "full" => Ok(PipelineKind::Full),
            _ => Err(format!("unknown pipeline {s:?} (diffusion, interpret, substitute-eval, full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Diffusion,
    OldModel,
    Surrogates,
    Salience,
    SentimentModel,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub outputs: Vec<OutputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub header: OutputHeader,
    pub pipeline: PipelineKind,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn outputs(&self) -> impl Iterator<Item = &OutputRecord> {
        self.stages.iter().flat_map(|s| &s.outputs)
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub manifest: Manifest,
    /// Requests sent to the annotation backend.
    pub annotation_calls: usize,
}

/// Emoji-version correlation rows from the reference tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub version: String,
    pub method: CorrelationMethod,
    pub x: String,
    pub y: String,
    pub n: usize,
    pub value: f64,
    pub p_value: Option<f64>,
}

/// `emoji-13.0.csv` → `13.0`; otherwise the file stem.
pub fn appendix_version(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("emoji-").map(str::to_string).unwrap_or(stem)
}

/// Hashtag popularity vs late emoji counts (rank correlation) and similar
/// word counts vs late emoji counts (Pearson on logs).
pub fn appendix_correlations(version: &str, rows: &[AppendixRow]) -> Result<Vec<CorrelationRow>, String> {
    let late: Vec<f64> = rows.iter().map(|r| r.emoji_late).collect();
    let hashtags: Vec<f64> = rows.iter().map(|r| r.hashtag_early).collect();
    let words: Vec<f64> = rows.iter().map(|r| r.word_early).collect();
    let mut out = Vec::new();
    for (method, x, xs) in [
        (CorrelationMethod::Spearman, "hashtag_early", &hashtags),
        (CorrelationMethod::PearsonLog, "word_early", &words),
    ] {
        let c = correlate(method, xs, &late).map_err(|e| format!("{version} {x}: {e}"))?;
        out.push(CorrelationRow {
            version: version.to_string(),
            method,
            x: x.into(),
            y: "emoji_late".into(),
            n: c.n,
            value: c.value,
            p_value: c.p_value,
        });
    }
    Ok(out)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Predictions for every item, in order, across `threads` workers.
pub fn predict_parallel(
    model: &dyn Classifier,
    data: &LabeledDataset,
    with_salience: bool,
    threads: usize,
) -> PredictionFile {
    let predict = |items: &[crate::classifier::LabeledItem]| -> Vec<PredictionRow> {
        items
            .iter()
            .map(|it| PredictionRow {
                id: it.id.clone(),
                label: model.predict_label(&it.tokens).to_string(),
                salience: if with_salience { model.salience(&it.tokens) } else { None },
            })
            .collect()
    };
    let threads = threads.max(1).min(data.items.len().max(1));
    let rows = if threads == 1 {
        predict(&data.items)
    } else {
        let chunk = data.items.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = data.items.chunks(chunk).map(|c| s.spawn(move || predict(c))).collect();
            handles.into_iter().flat_map(|h| h.join().expect("prediction worker panicked")).collect()
        })
    };
    PredictionFile { label_space: model.label_space().to_vec(), rows }
}

pub fn accuracy(predictions: &PredictionFile, data: &LabeledDataset) -> f64 {
    if data.items.is_empty() {
        return 0.0;
    }
    let by_id = predictions.by_id();
    let hits = data.items.iter().filter(|it| by_id.get(it.id.as_str()).is_some_and(|r| r.label == it.label)).count();
    hits as f64 / data.items.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub label_space: Vec<String>,
    pub class_counts: Vec<(String, usize)>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentDataSummary {
    pub annotated_posts: usize,
    pub kept: usize,
    pub disagreed: usize,
    pub missing: usize,
    pub train: usize,
    pub test: usize,
    pub label_counts: Vec<(String, usize)>,
}

/// Intermediate results shared between stages.
struct State<'a> {
    config: &'a PipelineConfig,
    header: OutputHeader,
    lexicon: Lexicon,
    corpus: Option<Corpus>,
    old_model: Option<NaiveBayes>,
    new_emojis: Vec<EmojiId>,
    targets: Option<TargetSet>,
    surrogates: Option<SurrogateReport>,
    sentiment: Option<(NaiveBayes, LabeledDataset)>,
    backend: Option<&'a dyn Completion>,
    annotation_calls: usize,
    outputs: Vec<OutputRecord>,
}

impl State<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), String> {
        fs::write(self.config.output_dir.join(name), bytes).map_err(|e| format!("{name}: {e}"))?;
        self.outputs.push(OutputRecord { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), String> {
        let bytes = json_with_header(&self.header, body);
        self.write(name, &bytes)
    }

    fn corpus(&self) -> Result<&Corpus, String> {
        self.corpus.as_ref().ok_or_else(|| "no corpus".to_string())
    }

    fn resolve(&self, emoji: &str) -> Result<EmojiId, String> {
        self.lexicon.resolve(emoji).map(|e| self.lexicon.base(e)).ok_or_else(|| format!("unknown emoji {emoji:?}"))
    }

    fn status(&self, e: EmojiId) -> EmojiStatus {
        self.lexicon.classify(e, self.config.cutoff)
    }

    fn ingest(&mut self) -> Result<(), String> {
        let Some(path) = &self.config.corpus else {
            return self.write_json("ingest.json", &serde_json::json!({ "posts": 0 }));
        };
        let corpus = ingest(path, &self.lexicon, &IngestOptions::default()).map_err(|e| e.to_string())?;
        let buckets = corpus.buckets(self.config.granularity);
        let body = serde_json::json!({
            "posts": corpus.len(),
            "stats": corpus.stats,
            "first_bucket": buckets.first(),
            "last_bucket": buckets.last(),
        });
        self.corpus = Some(corpus);
        self.write_json("ingest.json", &body)
    }

    fn diffusion(&mut self) -> Result<(), String> {
        let g = self.config.granularity;
        let mut files = Vec::new();
        if let Some(corpus) = &self.corpus {
            let counts = EmojiCounts::count(corpus.iter(), g, &self.lexicon);
            let top: Vec<EmojiId> =
                counts.most_frequent().into_iter().take(self.config.trend_top).map(|e| e.0).collect();
            let series = series_from_counts(&counts, &top, g, &self.lexicon);
            let rows = series.iter().flat_map(|s| {
                s.points
                    .iter()
                    .map(move |p| [p.bucket.to_string(), s.emoji.clone(), p.count.to_string(), p.share.to_string()])
            });
            files.push(("trends.csv", csv_with_header(&self.header, &["bucket", "emoji", "count", "share"], rows)));

            let mut versions: Vec<EmojiVersion> = self
                .lexicon
                .iter()
                .filter(|e| self.config.cutoff.is_new(e))
                .map(|e| e.version)
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
            versions.sort();
            let mut proxy_rows = Vec::new();
            for v in versions {
                if let Some(stages) = version_stages(&counts, v, self.config.stages, &self.lexicon) {
                    for p in proxy_pairs(corpus, &counts, v, stages, 10, &self.lexicon) {
                        proxy_rows.push([
                            v.to_string(),
                            p.emoji,
                            stages.early.to_string(),
                            stages.late.to_string(),
                            p.hashtag_mean.to_string(),
                            p.hashtag_total.to_string(),
                            p.late_count.to_string(),
                        ]);
                    }
                }
            }
            let cols = ["version", "emoji", "early", "late", "hashtag_mean", "hashtag_total", "late_count"];
            files.push(("proxy.csv", csv_with_header(&self.header, &cols, proxy_rows)));
        }
        for (name, bytes) in files {
            self.write(name, &bytes)?;
        }
        if !self.config.appendix.is_empty() {
            let mut rows = Vec::new();
            for path in &self.config.appendix {
                let table = load_appendix(path).map_err(|e| e.to_string())?;
                rows.extend(appendix_correlations(&appendix_version(path), &table)?);
            }
            let cells = rows.iter().map(|r| {
                [
                    r.version.clone(),
                    r.method.to_string(),
                    r.x.clone(),
                    r.y.clone(),
                    r.n.to_string(),
                    r.value.to_string(),
                    fmt_opt(r.p_value),
                ]
            });
            let bytes = csv_with_header(&self.header, &["version", "method", "x", "y", "n", "value", "p_value"], cells);
            self.write("correlations.csv", &bytes)?;
        }
        Ok(())
    }

    fn old_model(&mut self) -> Result<(), String> {
        let corpus = self.corpus()?;
        let labels: Vec<EmojiId> = match &self.config.old_labels {
            Some(list) => list.iter().map(|e| self.resolve(e)).collect::<Result<_, _>>()?,
            None => EmojiCounts::count(corpus.iter(), self.config.granularity, &self.lexicon)
                .most_frequent()
                .into_iter()
                .map(|e| e.0)
                .filter(|&e| self.status(e) == EmojiStatus::Old)
                .take(self.config.old_label_count)
                .collect(),
        };
        if let Some(&e) = labels.iter().find(|&&e| self.status(e) == EmojiStatus::New) {
            return Err(format!("old label {} is new under the cutoff", self.lexicon.render(e)));
        }
        if labels.is_empty() {
            return Err("no old emojis in the corpus".into());
        }
        let mut defs: Vec<LabelDef> = labels.iter().map(|&e| LabelDef::Emoji(e)).collect();
        defs.push(LabelDef::NoEmoji);
        let spec = EmojiDatasetSpec {
            labels: defs,
            cutoff: self.config.cutoff,
            cap_per_class: self.config.cap_per_class,
            seed: self.config.seed,
            provenance: Provenance::OldEmoji,
        };
        let data = build_emoji_dataset(corpus, &spec, &self.lexicon).map_err(|e| e.to_string())?;
        let (model, metrics) = self.train_eval(&data)?;
        self.write_json("old_model.json", model.file())?;
        self.write_json("old_model_metrics.json", &metrics)?;
        self.old_model = Some(model);
        Ok(())
    }

    fn train_eval(&self, data: &LabeledDataset) -> Result<(NaiveBayes, ModelMetrics), String> {
        let split = data.split(self.config.seed);
        let cfg = TrainConfig { alpha: self.config.alpha, seed: self.config.seed };
        let model = NaiveBayes::train(&split.train, cfg).map_err(|e| e.to_string())?;
        let t = self.config.threads;
        let metrics = ModelMetrics {
            label_space: data.label_space.clone(),
            class_counts: data.class_counts(),
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
            validation_accuracy: accuracy(&predict_parallel(&model, &split.validation, false, t), &split.validation),
            test_accuracy: accuracy(&predict_parallel(&model, &split.test, false, t), &split.test),
        };
        Ok((model, metrics))
    }

    fn pick_new_emojis(&mut self) -> Result<(), String> {
        if !self.new_emojis.is_empty() {
            return Ok(());
        }
        let corpus = self.corpus()?;
        let chosen: Vec<EmojiId> = match &self.config.new_emojis {
            Some(list) => list.iter().map(|e| self.resolve(e)).collect::<Result<_, _>>()?,
            None => new_emojis_in(corpus, self.config.cutoff, self.config.min_new_posts, &self.lexicon),
        };
        if let Some(&e) = chosen.iter().find(|&&e| self.status(e) == EmojiStatus::Old) {
            return Err(format!("{} is not new under the cutoff", self.lexicon.render(e)));
        }
        if chosen.is_empty() {
            return Err("no new emojis to interpret".into());
        }
        self.new_emojis = chosen;
        Ok(())
    }

    fn surrogates(&mut self) -> Result<(), String> {
        self.pick_new_emojis()?;
        let model = self.old_model.as_ref().ok_or("old model missing")?;
        let targets = TargetSet::build(self.corpus()?, &self.new_emojis, self.config.cutoff, &self.lexicon);
        let opts = SurrogateOptions { top_n: self.config.surrogates_top, ..Default::default() };
        let report = surrogate_rank(model, &targets, Some(self.config.cutoff), &self.lexicon, &opts)
            .map_err(|e| e.to_string())?;
        self.write_json("surrogates.json", &report)?;
        self.targets = Some(targets);
        self.surrogates = Some(report);
        Ok(())
    }

    fn salience(&mut self) -> Result<(), String> {
        self.pick_new_emojis()?;
        let model = self.old_model.as_ref().ok_or("old model missing")?;
        let mut defs: Vec<LabelDef> = model
            .label_space()
            .iter()
            .filter_map(|l| self.lexicon.lookup(l))
            .chain(self.new_emojis.iter().copied())
            .map(LabelDef::Emoji)
            .collect();
        defs.push(LabelDef::NoEmoji);
        let spec = EmojiDatasetSpec {
            labels: defs,
            cutoff: self.config.cutoff,
            cap_per_class: self.config.cap_per_class,
            seed: self.config.seed,
            provenance: Provenance::EmojiPrediction,
        };
        let data = build_emoji_dataset(self.corpus()?, &spec, &self.lexicon).map_err(|e| e.to_string())?;
        let (model, metrics) = self.train_eval(&data)?;
        let split = data.split(self.config.seed);
        let preds = predict_parallel(&model, &split.test, true, self.config.threads);
        let opts = SalienceOptions { min_occurrences: self.config.min_occurrences, top_k: self.config.salience_top };
        let table = aggregate_salience(&split.test, &preds, &opts).map_err(|e| e.to_string())?;
        self.write_json("emoji_model_metrics.json", &metrics)?;
        self.write_json("salience.json", &table)?;
        if let Some(s) = &self.surrogates {
            let rows = interpretation_rows(&table, s);
            self.write_json("interpretation.json", &serde_json::json!({ "rows": rows }))?;
        }
        Ok(())
    }

    fn sentiment_model(&mut self) -> Result<(), String> {
        self.pick_new_emojis()?;
        let surrogates = self.surrogates.as_ref().ok_or("surrogate ranking missing")?;
        let policy = SubstitutionPolicy::new(&self.lexicon, self.config.cutoff, surrogates.surrogate_map())
            .map_err(|e| e.to_string())?
            .lenient(self.config.lenient);
        let corpus = self.corpus.as_ref().ok_or("no corpus")?;
        let target_ids: HashSet<&str> =
            self.targets.as_ref().ok_or("targets missing")?.items.iter().map(|it| it.id.as_str()).collect();
        let has_new = |p: &TokenizedPost| p.emojis(&self.lexicon).any(|e| self.status(e) == EmojiStatus::New);
        let mut old_slice: Vec<&TokenizedPost> = corpus.iter().filter(|p| !has_new(p)).collect();
        if let Some(n) = self.config.sentiment_sample {
            if old_slice.len() > n {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                let mut idx: Vec<usize> = (0..old_slice.len()).collect();
                idx.shuffle(&mut rng);
                idx.truncate(n);
                idx.sort_unstable();
                old_slice = idx.into_iter().map(|i| old_slice[i]).collect();
            }
        }
        let test_posts: Vec<&TokenizedPost> = corpus.iter().filter(|p| target_ids.contains(p.id())).collect();
        let selected: Vec<&TokenizedPost> = old_slice.iter().chain(&test_posts).copied().collect();

        let store = match &self.config.annotations {
            Some(p) => AnnotationStore::open(p).map_err(|e| e.to_string())?,
            None => AnnotationStore::in_memory(),
        };
        let annotator = match self.backend.filter(|_| !self.config.offline) {
            Some(b) => Annotator::online(&store, b, self.config.threads),
            None => {
                let mut a = Annotator::offline(&store);
                a.concurrency = self.config.threads;
                a
            }
        };
        let annotations = annotator.annotate_posts(&selected).map_err(|e| format!("annotating: {e}"))?;
        self.annotation_calls += annotator.calls();
        let (data, tally) = build_sentiment_dataset(selected.iter().copied(), &annotations, &self.lexicon);
        let train = policy.without_new(&data);
        let test = LabeledDataset {
            label_space: data.label_space.clone(),
            provenance: data.provenance,
            items: data.items.iter().filter(|it| target_ids.contains(it.id.as_str())).cloned().collect(),
        };
        let cfg = TrainConfig { alpha: self.config.alpha, seed: self.config.seed };
        let model = NaiveBayes::train(&train, cfg).map_err(|e| e.to_string())?;
        let summary = SentimentDataSummary {
            annotated_posts: selected.len(),
            kept: tally.kept,
            disagreed: tally.disagreed,
            missing: tally.missing,
            train: train.len(),
            test: test.len(),
            label_counts: data.class_counts(),
        };
        self.write_json("sentiment_model.json", model.file())?;
        self.write_json("sentiment_data.json", &summary)?;
        self.sentiment = Some((model, test));
        Ok(())
    }

    fn evaluation(&mut self) -> Result<(), String> {
        let (model, test) = self.sentiment.as_ref().ok_or("sentiment model missing")?;
        let surrogates = self.surrogates.as_ref().ok_or("surrogate ranking missing")?;
        let policy = SubstitutionPolicy::new(&self.lexicon, self.config.cutoff, surrogates.surrogate_map())
            .map_err(|e| e.to_string())?
            .lenient(self.config.lenient);
        let targets: Vec<String> = surrogates.rankings.iter().map(|r| r.new_emoji.clone()).collect();
        let groups = self.config.groups.clone().unwrap_or_else(default_groups);
        let report = evaluate(model, test, &targets, &policy, &groups).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv, Some(&self.header.comment())).map_err(|e| e.to_string())?;
        self.write("evaluation.csv", &csv)?;
        self.write_json("evaluation.json", &report)?;
        Ok(())
    }

    fn run(&mut self, stage: Stage) -> Result<(), String> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Diffusion => self.diffusion(),
            Stage::OldModel => self.old_model(),
            Stage::Surrogates => self.surrogates(),
            Stage::Salience => self.salience(),
            Stage::SentimentModel => self.sentiment_model(),
            Stage::Evaluation => self.evaluation(),
        }
    }
}

/// Runs `kind`. The backend is only used when the config is not offline.
/// A failing stage stops the run; the MANIFEST still lists what was written.
pub fn run_pipeline(
    config: &PipelineConfig,
    kind: PipelineKind,
    backend: Option<&dyn Completion>,
) -> Result<RunSummary, PipelineError> {
    config.validate(kind)?;
    let lexicon = match &config.lexicon {
        Some(p) => Lexicon::load(p).map_err(|e| PipelineError::Config(e.to_string()))?,
        None => Lexicon::bundled(),
    };
    fs::create_dir_all(&config.output_dir)?;
    let header = config.header();
    let mut state = State {
        config,
        header: header.clone(),
        lexicon,
        corpus: None,
        old_model: None,
        new_emojis: Vec::new(),
        targets: None,
        surrogates: None,
        sentiment: None,
        backend,
        annotation_calls: 0,
        outputs: Vec::new(),
    };
    let mut records = Vec::new();
    let mut failure = None;
    for &stage in kind.stages() {
        if failure.is_some() {
            records.push(StageRecord { stage, status: StageStatus::NotRun, outputs: vec![], message: None });
            continue;
        }
        let result = state.run(stage);
        let outputs = std::mem::take(&mut state.outputs);
        match result {
            Ok(()) => records.push(StageRecord { stage, status: StageStatus::Ok, outputs, message: None }),
            Err(message) => {
                records.push(StageRecord {
                    stage,
                    status: StageStatus::Failed,
                    outputs,
                    message: Some(message.clone()),
                });
                failure = Some((stage, message));
            }
        }
    }
    let manifest = Manifest { header, pipeline: kind, complete: failure.is_none(), stages: records };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(config.output_dir.join(MANIFEST), bytes)?;
    match failure {
        None => Ok(RunSummary { manifest, annotation_calls: state.annotation_calls }),
        Some((stage, message)) => Err(PipelineError::Stage { stage, message, manifest: Box::new(manifest) }),
    }
}
