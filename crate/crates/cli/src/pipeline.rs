use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use emodiff_core::annotate::{Completion, HttpCompletion, API_KEY_ENV, DEFAULT_ENDPOINT, DEFAULT_MODEL};
use emodiff_core::diffusion::StageOffsets;
use emodiff_core::pipeline::{PipelineError, StageStatus};
use emodiff_core::{run_pipeline, Granularity, Manifest, PipelineConfig, PipelineKind, VersionCutoff};

use crate::split_list;

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// diffusion, interpret, substitute-eval or full.
    kind: PipelineKind,
    /// JSON config; relative paths inside are relative to the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cutoff: Option<VersionCutoff>,
    #[arg(long)]
    granularity: Option<Granularity>,
    /// Buckets from first appearance to the early stage.
    #[arg(long)]
    early: Option<u32>,
    /// Buckets from the early stage to the late stage.
    #[arg(long)]
    late: Option<u32>,
    /// Reference tables (repeatable); replaces the config's list.
    #[arg(long)]
    appendix: Vec<PathBuf>,
    #[arg(long)]
    trend_top: Option<usize>,
    /// Old-emoji labels (repeatable or comma-separated).
    #[arg(long)]
    old_labels: Vec<String>,
    #[arg(long)]
    old_label_count: Option<usize>,
    /// New emojis to interpret (repeatable or comma-separated).
    #[arg(long)]
    new_emojis: Vec<String>,
    #[arg(long)]
    min_new_posts: Option<usize>,
    #[arg(long)]
    cap_per_class: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_occurrences: Option<u64>,
    #[arg(long)]
    salience_top: Option<usize>,
    #[arg(long)]
    surrogates_top: Option<usize>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Replay stored annotations only.
    #[arg(long, conflicts_with = "online")]
    offline: bool,
    /// Ask the completion endpoint for annotations missing from the store.
    #[arg(long)]
    online: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    sentiment_sample: Option<usize>,
    #[arg(long, conflicts_with = "strict")]
    lenient: bool,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    threads: Option<usize>,
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn config(args: &PipelineArgs, lexicon: Option<PathBuf>) -> Result<PipelineConfig> {
    let mut c = match (&args.config, &args.output_dir) {
        (Some(p), _) => PipelineConfig::load(p)?,
        (None, Some(dir)) => PipelineConfig::new(dir),
        (None, None) => bail!("give --config or --output-dir"),
    };
    apply(&mut c.output_dir, args.output_dir.clone());
    if args.corpus.is_some() {
        c.corpus = args.corpus.clone();
    }
    if lexicon.is_some() {
        c.lexicon = lexicon;
    }
    apply(&mut c.seed, args.seed);
    apply(&mut c.cutoff, args.cutoff);
    apply(&mut c.granularity, args.granularity);
    let StageOffsets { early, late } = c.stages;
    c.stages = StageOffsets { early: args.early.unwrap_or(early), late: args.late.unwrap_or(late) };
    if !args.appendix.is_empty() {
        c.appendix = args.appendix.clone();
    }
    apply(&mut c.trend_top, args.trend_top);
    if !args.old_labels.is_empty() {
        c.old_labels = Some(split_list(&args.old_labels));
    }
    apply(&mut c.old_label_count, args.old_label_count);
    if !args.new_emojis.is_empty() {
        c.new_emojis = Some(split_list(&args.new_emojis));
    }
    apply(&mut c.min_new_posts, args.min_new_posts);
    if args.cap_per_class.is_some() {
        c.cap_per_class = args.cap_per_class;
    }
    apply(&mut c.alpha, args.alpha);
    apply(&mut c.min_occurrences, args.min_occurrences);
    apply(&mut c.salience_top, args.salience_top);
    apply(&mut c.surrogates_top, args.surrogates_top);
    if args.annotations.is_some() {
        c.annotations = args.annotations.clone();
    }
    if args.offline {
        c.offline = true;
    }
    if args.online {
        c.offline = false;
    }
    if args.endpoint.is_some() {
        c.endpoint = args.endpoint.clone();
    }
    if args.llm_model.is_some() {
        c.model = args.llm_model.clone();
    }
    if args.sentiment_sample.is_some() {
        c.sentiment_sample = args.sentiment_sample;
    }
    if args.lenient {
        c.lenient = true;
    }
    if args.strict {
        c.lenient = false;
    }
    apply(&mut c.threads, args.threads);
    Ok(c)
}

fn print_manifest(m: &Manifest) {
    for s in &m.stages {
        let status = match s.status {
            StageStatus::Ok => "ok",
            StageStatus::Failed => "FAILED",
            StageStatus::NotRun => "not run",
        };
        let files: Vec<&str> = s.outputs.iter().map(|o| o.path.as_str()).collect();
        eprintln!("{:<16} {:<8} {}", s.stage.to_string(), status, files.join(" "));
        if let Some(msg) = &s.message {
            eprintln!("{:<16} {msg}", "");
        }
    }
}

pub fn run(args: PipelineArgs, lexicon: Option<PathBuf>) -> Result<()> {
    let config = config(&args, lexicon)?;
    let backend: Option<Box<dyn Completion>> = if config.offline {
        None
    } else {
        let key =
            std::env::var(API_KEY_ENV).with_context(|| format!("{API_KEY_ENV} is not set; run with --offline"))?;
        let endpoint = config.endpoint.as_deref().unwrap_or(DEFAULT_ENDPOINT);
        let model = config.model.as_deref().unwrap_or(DEFAULT_MODEL);
        Some(Box::new(HttpCompletion::new(endpoint, model, key, std::time::Duration::from_secs(60))))
    };
    match run_pipeline(&config, args.kind, backend.as_deref()) {
        Ok(summary) => {
            print_manifest(&summary.manifest);
            eprintln!(
                "complete: {} (config {}, seed {}, {} annotation requests)",
                config.output_dir.display(),
                summary.manifest.header.config,
                config.seed,
                summary.annotation_calls
            );
            Ok(())
        }
        Err(PipelineError::Stage { stage, message, manifest }) => {
            print_manifest(&manifest);
            bail!("stage {stage} failed: {message}; partial outputs kept in {}", config.output_dir.display())
        }
        Err(e) => Err(e.into()),
    }
}
