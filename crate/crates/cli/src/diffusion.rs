use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use emodiff_core::diffusion::{
    correlate as correlate_values, pmi_table, proxy_pairs, rounding_half_unit, sensitivity, series_from_counts,
    version_stages, CorrelationMethod, EmojiCounts, PmiOptions, Sensitivity, StageOffsets,
};
use emodiff_core::output::csv_with_header;
use emodiff_core::pipeline::appendix_version;
use emodiff_core::{EmojiId, EmojiVersion, Granularity, OutputHeader, TimeBucket, VersionCutoff};
use serde::Serialize;

use crate::{emit, split_list, Ctx};

#[derive(Debug, Args, Serialize)]
pub struct TrendsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Emojis to track (repeatable or comma-separated); the most frequent when absent.
    #[arg(long)]
    emoji: Vec<String>,
    /// How many of the most frequent emojis to track without --emoji.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, default_value = "month")]
    granularity: Granularity,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn trends(ctx: &Ctx, args: TrendsArgs) -> Result<()> {
    let corpus = ctx.corpus(&args.corpus)?;
    if corpus.is_empty() {
        bail!("{} has no posts", args.corpus.display());
    }
    let counts = EmojiCounts::count(corpus.iter(), args.granularity, &ctx.lexicon);
    let emojis: Vec<EmojiId> = match split_list(&args.emoji) {
        list if list.is_empty() => counts.most_frequent().into_iter().take(args.top).map(|e| e.0).collect(),
        list => ctx.emojis(&list)?,
    };
    let series = series_from_counts(&counts, &emojis, args.granularity, &ctx.lexicon);
    let rows = series.iter().flat_map(|s| {
        s.points.iter().map(move |p| [p.bucket.to_string(), s.emoji.clone(), p.count.to_string(), p.share.to_string()])
    });
    let header = OutputHeader::for_args(&args, 0);
    emit(args.out.as_deref(), &csv_with_header(&header, &["bucket", "emoji", "count", "share"], rows))
}

#[derive(Debug, Args, Serialize)]
pub struct PmiArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    emoji: String,
    #[arg(long, default_value = "month")]
    granularity: Granularity,
    /// Buckets to analyse, e.g. 2021-W01 (repeatable); every bucket when absent.
    #[arg(long)]
    bucket: Vec<String>,
    /// Treat the whole corpus as one slice instead of per bucket.
    #[arg(long, conflicts_with = "bucket")]
    whole: bool,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Minimum posts containing both the emoji and the word.
    #[arg(long, default_value_t = 5)]
    min_support: u64,
    /// Ignore hashtags.
    #[arg(long)]
    no_hashtags: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn pmi(ctx: &Ctx, args: PmiArgs) -> Result<()> {
    let corpus = ctx.corpus(&args.corpus)?;
    let emoji = ctx.emoji(&args.emoji)?;
    let opts = PmiOptions { min_support: args.min_support, top_k: Some(args.top), include_hashtags: !args.no_hashtags };
    let tables = if args.whole {
        vec![pmi_table(corpus.iter(), emoji, "all", &ctx.lexicon, &opts)]
    } else {
        let buckets: Vec<TimeBucket> = if args.bucket.is_empty() {
            corpus.buckets(args.granularity)
        } else {
            let mut v = Vec::new();
            for b in split_list(&args.bucket) {
                let tb: TimeBucket = b.parse().map_err(anyhow::Error::msg)?;
                if tb.granularity != args.granularity {
                    bail!("bucket {b} does not match --granularity {}", args.granularity);
                }
                v.push(tb);
            }
            v
        };
        let one = |b: &TimeBucket| pmi_table(corpus.in_bucket(*b), emoji, &b.to_string(), &ctx.lexicon, &opts);
        let threads = args.threads.max(1).min(buckets.len().max(1));
        if threads == 1 {
            buckets.iter().map(one).collect()
        } else {
            let chunk = buckets.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> =
                    buckets.chunks(chunk).map(|c| s.spawn(move || c.iter().map(one).collect::<Vec<_>>())).collect();
                handles.into_iter().flat_map(|h| h.join().expect("pmi worker panicked")).collect()
            })
        }
    };
    let mut rows = Vec::new();
    for t in &tables {
        if let Some(d) = &t.diagnostic {
            eprintln!("{d}");
        }
        for r in &t.rows {
            rows.push([
                t.slice.clone(),
                t.emoji.clone(),
                r.word.clone(),
                r.pmi.to_string(),
                r.joint_count.to_string(),
                r.word_count.to_string(),
                t.n.to_string(),
                t.n_e.to_string(),
            ]);
        }
    }
    let header = OutputHeader::for_args(&args, 0);
    let cols = ["slice", "emoji", "word", "pmi", "joint_count", "word_count", "posts", "emoji_posts"];
    emit(args.out.as_deref(), &csv_with_header(&header, &cols, rows))
}

#[derive(Debug, Args, Serialize)]
pub struct ProxyArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Emoji versions to analyse (repeatable); every post-cutoff version when absent.
    #[arg(long)]
    version: Vec<EmojiVersion>,
    #[arg(long, default_value = "12.1")]
    cutoff: VersionCutoff,
    #[arg(long, default_value = "month")]
    granularity: Granularity,
    /// Buckets from a version's first appearance to its early stage.
    #[arg(long, default_value_t = 2)]
    early: u32,
    /// Buckets from the early stage to the late stage.
    #[arg(long, default_value_t = 12)]
    late: u32,
    /// Emojis per version, by late-stage usage.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn proxy(ctx: &Ctx, args: ProxyArgs) -> Result<()> {
    let corpus = ctx.corpus(&args.corpus)?;
    let counts = EmojiCounts::count(corpus.iter(), args.granularity, &ctx.lexicon);
    let versions: Vec<EmojiVersion> = if args.version.is_empty() {
        let set: HashSet<EmojiVersion> =
            ctx.lexicon.iter().filter(|e| args.cutoff.is_new(e)).map(|e| e.version).collect();
        let mut v: Vec<_> = set.into_iter().collect();
        v.sort();
        v
    } else {
        args.version.clone()
    };
    let offsets = StageOffsets { early: args.early, late: args.late };
    let mut rows = Vec::new();
    for v in versions {
        let Some(stages) = version_stages(&counts, v, offsets, &ctx.lexicon) else {
            eprintln!("no emoji of version {v} occurs in the corpus");
            continue;
        };
        for p in proxy_pairs(&corpus, &counts, v, stages, args.top, &ctx.lexicon) {
            rows.push([
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
    let header = OutputHeader::for_args(&args, 0);
    let cols = ["version", "emoji", "early", "late", "hashtag_mean", "hashtag_total", "late_count"];
    emit(args.out.as_deref(), &csv_with_header(&header, &cols, rows))
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    /// CSV tables with a header row; `#` lines are ignored.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, default_value = "spearman")]
    method: CorrelationMethod,
    /// X column; hashtag_early for spearman, word_early otherwise.
    #[arg(long)]
    x: Option<String>,
    #[arg(long, default_value = "emoji_late")]
    y: String,
    /// A published value to compare against; prints a discrepancy analysis.
    #[arg(long)]
    reference: Option<f64>,
    #[arg(long, default_value_t = 0.05, requires = "reference")]
    tolerance: f64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

struct Table {
    labels: Vec<String>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    x_half: Vec<f64>,
    y_half: Vec<f64>,
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).with_context(|| format!("{} has no column {name:?}", path.display()))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut t = Table { labels: vec![], xs: vec![], ys: vec![], x_half: vec![], y_half: vec![] };
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .trim()
                .parse()
                .with_context(|| format!("{} row {}: {:?} is not a number", path.display(), i + 1, &rec[j]))
        };
        t.xs.push(num(xi)?);
        t.ys.push(num(yi)?);
        t.x_half.push(rounding_half_unit(&rec[xi]));
        t.y_half.push(rounding_half_unit(&rec[yi]));
        t.labels
            .push(rec.get(0).filter(|_| xi != 0 && yi != 0).map_or_else(|| format!("row {}", i + 1), str::to_string));
    }
    Ok(t)
}

fn discrepancy(label: &str, s: &Sensitivity, reference: f64, tolerance: f64, table: &Table) {
    let diff = s.value - reference;
    let verdict = if diff.abs() <= tolerance { "within" } else { "outside" };
    eprintln!(
        "{label}: {} = {:.4}, reference {reference} (difference {diff:+.4}, {verdict} ±{tolerance})",
        s.method, s.value
    );
    eprintln!(
        "{label}: with every input moved by up to half a unit of its last printed digit, the value stays in [{:.6}, {:.6}]",
        s.rounding_min, s.rounding_max
    );
    if reference >= s.rounding_min && reference <= s.rounding_max {
        eprintln!("{label}: rounding of the table inputs can account for the difference");
    } else {
        eprintln!("{label}: rounding of the table inputs cannot account for the difference");
    }
    if let Some((i, v)) = s
        .leave_one_out
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| (a.1 - reference).abs().total_cmp(&(b.1 - reference).abs()))
    {
        let all: Vec<String> = s.leave_one_out.iter().zip(&table.labels).map(|(v, l)| format!("{l} {v:.4}")).collect();
        eprintln!("{label}: leaving one pair out gives {}", all.join(", "));
        eprintln!("{label}: closest to the reference without {} ({v:.4})", table.labels[i]);
    }
}

pub fn correlate(args: CorrelateArgs) -> Result<()> {
    let x = args.x.clone().unwrap_or_else(|| match args.method {
        CorrelationMethod::Spearman => "hashtag_early".into(),
        _ => "word_early".into(),
    });
    let mut rows = Vec::new();
    for path in &args.files {
        let t = read_columns(path, &x, &args.y)?;
        let c = correlate_values(args.method, &t.xs, &t.ys).with_context(|| path.display().to_string())?;
        let source = appendix_version(path);
        rows.push([
            source.clone(),
            c.method.to_string(),
            x.clone(),
            args.y.clone(),
            c.n.to_string(),
            c.value.to_string(),
            c.p_value.map(|p| p.to_string()).unwrap_or_default(),
        ]);
        if let Some(reference) = args.reference {
            let s = sensitivity(args.method, &t.xs, &t.ys, &t.x_half, &t.y_half)?;
            discrepancy(&source, &s, reference, args.tolerance, &t);
        }
    }
    let header = OutputHeader::for_args(&args, 0);
    emit(args.out.as_deref(), &csv_with_header(&header, &["source", "method", "x", "y", "n", "value", "p_value"], rows))
}
