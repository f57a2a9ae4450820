use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use emodiff_core::output::csv_with_header;
use emodiff_core::sentiment::{compare_slices, sentiment_trend, ValenceLexicon};
use emodiff_core::{Granularity, OutputHeader, Scorer, TimeBucket};
use serde::Serialize;

use crate::{emit, split_list, Ctx};

#[derive(Debug, Args, Serialize)]
pub struct SentimentArgs {
    /// Directory with valence.tsv, negators.txt and boosters.tsv; bundled lists by default.
    #[arg(long, global = true)]
    valence_dir: Option<PathBuf>,
    /// Score emojis listed in the valence table too.
    #[arg(long, global = true)]
    include_emojis: bool,
    #[command(subcommand)]
    action: Action,
}

#[derive(Debug, Subcommand, Serialize)]
enum Action {
    /// Compound score of each text.
    Score {
        #[arg(required = true)]
        texts: Vec<String>,
    },
    /// Mean score per bucket of posts containing an emoji.
    Trend {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        emoji: String,
        #[arg(long, default_value = "month")]
        granularity: Granularity,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    /// Score histograms of an early and a late slice.
    Hist {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        emoji: String,
        #[arg(long, default_value = "month")]
        granularity: Granularity,
        /// Early buckets (repeatable or comma-separated); the first half of
        /// the buckets where the emoji occurs by default.
        #[arg(long)]
        early: Vec<String>,
        /// Late buckets; the second half by default.
        #[arg(long)]
        late: Vec<String>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
}

fn buckets(values: &[String], granularity: Granularity) -> Result<Vec<TimeBucket>> {
    let mut out = Vec::new();
    for v in split_list(values) {
        let b: TimeBucket = v.parse().map_err(anyhow::Error::msg)?;
        if b.granularity != granularity {
            bail!("bucket {v} does not match granularity {granularity}");
        }
        out.push(b);
    }
    Ok(out)
}

pub fn run(ctx: &Ctx, args: SentimentArgs) -> Result<()> {
    let lexicon = match &args.valence_dir {
        Some(d) => ValenceLexicon::load_dir(d)?,
        None => ValenceLexicon::bundled(),
    };
    let mut scorer = Scorer::new(lexicon);
    scorer.include_emojis = args.include_emojis;
    let header = OutputHeader::for_args(&args, 0);
    match &args.action {
        Action::Score { texts } => {
            let rows = texts.iter().map(|t| [t.clone(), scorer.score_text(t, &ctx.lexicon).to_string()]);
            emit(None, &csv_with_header(&header, &["text", "compound"], rows))
        }
        Action::Trend { corpus, emoji, granularity, out } => {
            let corpus = ctx.corpus(corpus)?;
            let s = sentiment_trend(&corpus, ctx.emoji(emoji)?, *granularity, &scorer, &ctx.lexicon);
            let rows = s
                .points
                .iter()
                .map(|p| [p.bucket.to_string(), s.emoji.clone(), p.mean_score.to_string(), p.post_count.to_string()]);
            emit(out.as_deref(), &csv_with_header(&header, &["bucket", "emoji", "mean_score", "posts"], rows))
        }
        Action::Hist { corpus, emoji, granularity, early, late, bins, out } => {
            if *bins == 0 {
                bail!("--bins must be at least 1");
            }
            let corpus = ctx.corpus(corpus)?;
            let e = ctx.emoji(emoji)?;
            let (mut early, mut late) = (buckets(early, *granularity)?, buckets(late, *granularity)?);
            if early.is_empty() || late.is_empty() {
                let seen: Vec<TimeBucket> = sentiment_trend(&corpus, e, *granularity, &scorer, &ctx.lexicon)
                    .points
                    .iter()
                    .map(|p| p.bucket)
                    .collect();
                if seen.len() < 2 {
                    bail!("{emoji} occurs in fewer than two buckets; give --early and --late");
                }
                let (a, b) = seen.split_at(seen.len() / 2);
                if early.is_empty() {
                    early = a.to_vec();
                }
                if late.is_empty() {
                    late = b.to_vec();
                }
            }
            let cmp = compare_slices(&corpus, e, &early, &late, *bins, &scorer, &ctx.lexicon);
            let mut rows = Vec::new();
            for (name, h) in [("early", &cmp.early), ("late", &cmp.late)] {
                for (i, c) in h.counts.iter().enumerate() {
                    rows.push([
                        name.to_string(),
                        h.edges[i].to_string(),
                        h.edges[i + 1].to_string(),
                        c.to_string(),
                        h.n.to_string(),
                        h.mean.to_string(),
                    ]);
                }
            }
            eprintln!(
                "early {} posts mean {:.4}; late {} posts mean {:.4}; late - early = {:+.4}",
                cmp.early.n, cmp.early.mean, cmp.late.n, cmp.late.mean, cmp.mean_difference
            );
            emit(out.as_deref(), &csv_with_header(&header, &["slice", "lo", "hi", "count", "posts", "mean"], rows))
        }
    }
}
