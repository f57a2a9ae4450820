use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use emodiff_core::annotate::{
    AnnotationRequest, AnnotationStore, Completion, HttpCompletion, SentimentLabel, API_KEY_ENV, DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
};
use emodiff_core::corpus::synth::LedgerEntry;
use emodiff_core::diffusion::load_appendix;
use emodiff_core::output::csv_with_header;
use emodiff_core::{OutputHeader, Polarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{emit, jsonl_with_header, Ctx};

/// Where annotations come from: the store first, then (unless offline) the
/// completion endpoint, whose answers are appended to the store.
#[derive(Debug, Args, Serialize)]
pub struct Backend {
    /// Annotation store (JSON Lines).
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Replay the store only; never contact the endpoint.
    #[arg(long)]
    pub offline: bool,
    /// Chat-completions endpoint.
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub llm_model: String,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
}

impl Backend {
    pub fn completion(&self) -> Result<Option<Box<dyn Completion>>> {
        if self.offline {
            return Ok(None);
        }
        let key = std::env::var(API_KEY_ENV)
            .with_context(|| format!("{API_KEY_ENV} is not set; pass --offline to replay the store only"))?;
        let timeout = Duration::from_secs(self.timeout);
        Ok(Some(Box::new(HttpCompletion::new(&self.endpoint, &self.llm_model, key, timeout))))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AnnotateArgs {
    #[command(subcommand)]
    action: Action,
}

#[derive(Debug, Subcommand, Serialize)]
enum Action {
    /// Five similar words for each emoji.
    Words {
        #[arg(required = true)]
        emojis: Vec<String>,
        #[command(flatten)]
        backend: Backend,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    /// Two sentiment passes for every post of a posts file.
    Sentiment {
        posts: PathBuf,
        #[command(flatten)]
        backend: Backend,
        #[arg(long, default_value_t = 1)]
        #[serde(skip)]
        threads: usize,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    /// Build a store from known answers: synthetic ledger labels or the
    /// similar-word columns of reference tables.
    Import {
        /// New store file; must not exist yet.
        #[arg(long)]
        store: PathBuf,
        /// Synthetic ground truth (`synth --ledger`); needs --corpus for the texts.
        #[arg(long, requires = "corpus")]
        ledger: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Fraction of posts whose second pass disagrees with the first.
        #[arg(long, default_value_t = 0.0)]
        disagree: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference tables with `emoji` and `similar_words` columns.
        #[arg(long)]
        appendix: Vec<PathBuf>,
    },
}

#[derive(Serialize)]
struct SentimentRow<'a> {
    id: &'a str,
    passes: Option<[Polarity; 2]>,
    label: Option<SentimentLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(ctx: &Ctx, args: AnnotateArgs) -> Result<()> {
    let header = OutputHeader::for_args(&args, 0);
    match &args.action {
        Action::Words { emojis, backend, out } => {
            let store = backend.store()?;
            let completion = backend.completion()?;
            let annotator = backend.annotator(&store, completion.as_deref(), 1);
            let mut rows = Vec::new();
            for e in emojis {
                let emoji = ctx.lexicon.render(ctx.emoji(e)?);
                let words = annotator.similar_words(&emoji).with_context(|| format!("similar words for {emoji}"))?;
                rows.push([emoji, words.join(" ")]);
            }
            emit(out.as_deref(), &csv_with_header(&header, &["emoji", "words"], rows))
        }
        Action::Sentiment { posts, backend, threads, out } => {
            let corpus = ctx.corpus(posts)?;
            let store = backend.store()?;
            let completion = backend.completion()?;
            let annotator = backend.annotator(&store, completion.as_deref(), *threads);
            let texts: Vec<&str> = corpus.iter().map(|p| p.post.text.as_str()).collect();
            let results = annotator.sentiment_batch(&texts);
            let mut failed = 0;
            let rows: Vec<SentimentRow> = corpus
                .iter()
                .zip(results)
                .map(|(p, r)| match r {
                    Ok([a, b]) => SentimentRow {
                        id: p.id(),
                        passes: Some([a, b]),
                        label: Some(if a == b { SentimentLabel::Agreed(a) } else { SentimentLabel::Disagreement }),
                        error: None,
                    },
                    Err(e) => {
                        failed += 1;
                        SentimentRow { id: p.id(), passes: None, label: None, error: Some(e.to_string()) }
                    }
                })
                .collect();
            eprintln!("{} posts, {failed} without labels, {} backend calls", rows.len(), annotator.calls());
            emit(out.as_deref(), &jsonl_with_header(&header, rows))
        }
        Action::Import { store, ledger, corpus, disagree, seed, appendix } => {
            if store.exists() {
                bail!("{} already exists", store.display());
            }
            if !(0.0..=1.0).contains(disagree) {
                bail!("--disagree must be in [0, 1]");
            }
            if ledger.is_none() && appendix.is_empty() {
                bail!("nothing to import: give --ledger or --appendix");
            }
            let out = AnnotationStore::open(store)?;
            for path in appendix {
                for row in load_appendix(path)? {
                    let words = row.similar_words();
                    if words.len() != 5 {
                        eprintln!("{}: {} has {} similar words, skipped", path.display(), row.emoji, words.len());
                        continue;
                    }
                    out.insert(&AnnotationRequest::similar_words(&row.emoji, 1), &words.join(", "))?;
                }
            }
            if let (Some(ledger), Some(corpus)) = (ledger, corpus) {
                let corpus = ctx.corpus(corpus)?;
                let labels = read_ledger(ledger)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let (mut written, mut disagreed) = (0, 0);
                for p in corpus.iter() {
                    let Some(&label) = labels.get(p.id()) else { continue };
                    let first = AnnotationRequest::sentiment(&p.post.text, 1);
                    if out.get(&first).is_some() {
                        continue;
                    }
                    let second = if rng.gen_bool(*disagree) {
                        disagreed += 1;
                        let others: Vec<Polarity> = Polarity::ALL.into_iter().filter(|&q| q != label).collect();
                        others[rng.gen_range(0..others.len())]
                    } else {
                        label
                    };
                    out.insert(&first, label.as_str())?;
                    out.insert(&AnnotationRequest::sentiment(&p.post.text, 2), second.as_str())?;
                    written += 1;
                }
                eprintln!("{written} posts imported, {disagreed} with disagreeing passes");
            }
            eprintln!("{} records in {}", out.len(), store.display());
            Ok(())
        }
    }
}

fn read_ledger(path: &PathBuf) -> Result<HashMap<String, Polarity>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let e: LedgerEntry =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if let Some(l) = e.label {
            out.insert(e.id, l);
        }
    }
    Ok(out)
}
