use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Subcommand};
use emodiff_core::corpus::{ingest as ingest_posts, IngestOptions};
use emodiff_core::output::json_with_header;
use emodiff_core::{generate, EmojiStatus, Lexicon, OutputHeader, SynthSpec, VersionCutoff};
use serde::Serialize;

use crate::{emit, jsonl_with_header, Ctx};

#[derive(Debug, Args, Serialize)]
pub struct LexiconArgs {
    #[command(subcommand)]
    action: LexiconAction,
}

#[derive(Debug, Subcommand, Serialize)]
enum LexiconAction {
    /// Check a lexicon TSV and summarize it.
    Validate {
        /// Defaults to the global --lexicon, else the bundled lexicon.
        file: Option<PathBuf>,
        #[arg(long, default_value = "12.1")]
        cutoff: VersionCutoff,
    },
    /// List the emojis found in a text.
    Find {
        text: String,
        #[arg(long, default_value = "12.1")]
        cutoff: VersionCutoff,
    },
    /// List lexicon entries.
    List {
        #[arg(long, default_value = "12.1")]
        cutoff: VersionCutoff,
        /// Only entries released after the cutoff.
        #[arg(long)]
        new_only: bool,
        /// Include skin-tone and other non-base variants.
        #[arg(long)]
        variants: bool,
    },
}

fn status(s: EmojiStatus) -> &'static str {
    match s {
        EmojiStatus::Old => "old",
        EmojiStatus::New => "new",
    }
}

pub fn lexicon(ctx: &Ctx, args: LexiconArgs, global: Option<&Path>) -> Result<()> {
    let header = OutputHeader::for_args(&args, 0);
    let mut out = format!("# {}\n", header.comment());
    match args.action {
        LexiconAction::Validate { file, cutoff } => {
            let owned;
            let (lex, source) = match file.as_deref().or(global) {
                Some(p) => {
                    owned = Lexicon::load(p).with_context(|| format!("{} is not a valid lexicon", p.display()))?;
                    (&owned, p.display().to_string())
                }
                None => (&ctx.lexicon, "bundled".to_string()),
            };
            let base = lex.iter().filter(|e| e.is_base()).count();
            let new = lex.iter().filter(|e| e.is_base() && cutoff.is_new(e)).count();
            let mut versions: Vec<_> = lex.iter().map(|e| e.version).collect();
            versions.sort();
            versions.dedup();
            out +=
                &format!("source\t{source}\nentries\t{}\nbase_entries\t{base}\nnew_base_entries\t{new}\n", lex.len());
            if let (Some(a), Some(b)) = (versions.first(), versions.last()) {
                out += &format!("versions\t{a}..{b} ({} distinct)\n", versions.len());
            }
        }
        LexiconAction::Find { text, cutoff } => {
            let ext = ctx.lexicon.extract(&text);
            out += "emoji\tbase\thex\tname\tversion\tstatus\tstart\tend\n";
            for m in &ext.matches {
                let e = ctx.lexicon.get(m.id);
                out += &format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    &text[m.span.clone()],
                    ctx.lexicon.render(e.base),
                    e.hex(),
                    e.name,
                    e.version,
                    status(ctx.lexicon.classify(m.id, cutoff)),
                    m.span.start,
                    m.span.end
                );
            }
            if ext.unknown_scalars > 0 {
                eprintln!("{} emoji-like characters not in the lexicon", ext.unknown_scalars);
            }
        }
        LexiconAction::List { cutoff, new_only, variants } => {
            out += "emoji\thex\tname\tversion\tstatus\n";
            for e in ctx.lexicon.iter().filter(|e| variants || e.is_base()) {
                let s = ctx.lexicon.classify(e.id, cutoff);
                if new_only && s == EmojiStatus::Old {
                    continue;
                }
                out += &format!("{}\t{}\t{}\t{}\t{}\n", e.render(), e.hex(), e.name, e.version, status(s));
            }
        }
    }
    emit(None, out.as_bytes())
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Posts as JSON Lines: id, created_at (RFC 3339), text, optional lang.
    input: PathBuf,
    /// Normalized posts; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Ingest statistics as JSON.
    #[arg(long)]
    #[serde(skip)]
    stats: Option<PathBuf>,
    /// Keep only posts in this language (posts without a language are kept).
    #[arg(long)]
    lang: Option<String>,
    /// Drop exact duplicate texts.
    #[arg(long)]
    dedupe: bool,
    /// Inclusive start (RFC 3339 or YYYY-MM-DD).
    #[arg(long, value_parser = parse_time)]
    from: Option<DateTime<Utc>>,
    /// Exclusive end (RFC 3339 or YYYY-MM-DD).
    #[arg(long, value_parser = parse_time)]
    to: Option<DateTime<Utc>>,
    /// Fail when more than this fraction of lines is invalid.
    #[arg(long, default_value_t = 0.10)]
    max_invalid: f64,
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        .map_err(|_| format!("{s:?} is neither RFC 3339 nor YYYY-MM-DD"))
}

pub fn ingest(ctx: &Ctx, args: IngestArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.max_invalid) {
        bail!("--max-invalid must be in [0, 1]");
    }
    let range = match (args.from, args.to) {
        (None, None) => None,
        (from, to) => Some((from.unwrap_or(DateTime::<Utc>::MIN_UTC), to.unwrap_or(DateTime::<Utc>::MAX_UTC))),
    };
    let opts =
        IngestOptions { max_invalid_fraction: args.max_invalid, lang: args.lang.clone(), dedupe: args.dedupe, range };
    let corpus = ingest_posts(&args.input, &ctx.lexicon, &opts)?;
    let header = OutputHeader::for_args(&args, 0);
    eprintln!(
        "{} valid of {} lines ({} invalid, {} duplicate ids, {} filtered by language, {} deduplicated, {} out of range)",
        corpus.stats.valid,
        corpus.stats.lines,
        corpus.stats.invalid,
        corpus.stats.duplicate_ids,
        corpus.stats.filtered_lang,
        corpus.stats.deduplicated,
        corpus.stats.out_of_range
    );
    if let Some(p) = &args.stats {
        emit(Some(p), &json_with_header(&header, &corpus.stats))?;
    }
    emit(args.out.as_deref(), &jsonl_with_header(&header, corpus.iter().map(|p| &p.post)))
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Synthetic corpus spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the spec's post count.
    #[arg(long)]
    posts: Option<usize>,
    /// Posts as JSON Lines; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Ground truth per post (emoji, donor profile, sentiment label, valence).
    #[arg(long)]
    #[serde(skip)]
    ledger: Option<PathBuf>,
}

pub fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn synth(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let mut spec = load_spec(&args.spec)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.posts {
        spec.post_count = n;
    }
    let corpus = generate(&spec, &ctx.lexicon)?;
    let header = OutputHeader::new(emodiff_core::output::digest_json(&spec), spec.seed);
    if let Some(p) = &args.ledger {
        emit(Some(p), &jsonl_with_header(&header, &corpus.ledger))?;
    }
    emit(args.out.as_deref(), &jsonl_with_header(&header, &corpus.posts))
}
