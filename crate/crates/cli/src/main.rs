//! `emodiff`: emoji diffusion statistics, cross-version surrogates and
//! substitution evaluation from the command line.

mod annotate;
mod data;
mod diffusion;
mod model;
mod pipeline;
mod sentiment;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use emodiff_core::corpus::{ingest, IngestOptions};
use emodiff_core::{Corpus, EmojiId, Lexicon, OutputHeader};

#[derive(Debug, Parser)]
#[command(name = "emodiff", version, about = "Emoji diffusion, interpretation and substitution analysis")]
struct Cli {
    /// Emoji lexicon TSV (codepoints, name, version); the bundled one by default.
    #[arg(long, global = true, value_name = "TSV")]
    lexicon: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect and validate emoji lexicons.
    Lexicon(data::LexiconArgs),
    /// Validate and normalize a posts file.
    Ingest(data::IngestArgs),
    /// Generate a synthetic corpus from a spec.
    Synth(data::SynthArgs),
    /// Per-bucket emoji frequency series.
    Trends(diffusion::TrendsArgs),
    /// Words most associated with an emoji (PMI).
    Pmi(diffusion::PmiArgs),
    /// Early hashtag popularity against late emoji usage, per emoji version.
    Proxy(diffusion::ProxyArgs),
    /// Correlate two columns of one or more CSV tables.
    Correlate(diffusion::CorrelateArgs),
    /// Compound sentiment scores, trends and histograms.
    Sentiment(sentiment::SentimentArgs),
    /// Train a naive Bayes model.
    Train(model::TrainArgs),
    /// Split a labeled dataset 8:1:1.
    Split(model::SplitArgs),
    /// Predict labels (and per-token salience) for a dataset.
    Predict(model::PredictArgs),
    /// Aggregate per-token salience into top words per label.
    Salience(model::SalienceArgs),
    /// Rank old-emoji surrogates for new emojis.
    Surrogates(model::SurrogatesArgs),
    /// Replace new emojis with surrogates or name words.
    Substitute(model::SubstituteArgs),
    /// Sentiment accuracy with and without substitution.
    Evaluate(model::EvaluateArgs),
    /// LLM annotations: similar words and sentiment labels.
    Annotate(annotate::AnnotateArgs),
    /// Run a whole pipeline from a config file.
    Pipeline(pipeline::PipelineArgs),
}

/// Shared state for subcommands.
pub struct Ctx {
    pub lexicon: Lexicon,
}

impl Ctx {
    pub fn corpus(&self, path: &Path) -> Result<Corpus> {
        ingest(path, &self.lexicon, &IngestOptions::default()).with_context(|| format!("reading {}", path.display()))
    }

    pub fn emoji(&self, spec: &str) -> Result<EmojiId> {
        match self.lexicon.resolve(spec) {
            Some(id) => Ok(self.lexicon.base(id)),
            None => bail!("unknown emoji {spec:?}"),
        }
    }

    pub fn emojis(&self, specs: &[String]) -> Result<Vec<EmojiId>> {
        specs.iter().map(|s| self.emoji(s)).collect()
    }
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// `# header` line followed by one JSON object per line.
pub fn jsonl_with_header<T: serde::Serialize>(header: &OutputHeader, rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut buf = format!("# {}\n", header.comment()).into_bytes();
    for r in rows {
        serde_json::to_writer(&mut buf, &r).expect("row serializes");
        buf.push(b'\n');
    }
    buf
}

/// Comma-separated values, also accepting repeated flags.
pub fn split_list(values: &[String]) -> Vec<String> {
    values.iter().flat_map(|v| v.split(',')).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn run(cli: Cli) -> Result<()> {
    let lexicon = match &cli.lexicon {
        Some(p) => Lexicon::load(p).with_context(|| format!("loading lexicon {}", p.display()))?,
        None => Lexicon::bundled(),
    };
    let ctx = Ctx { lexicon };
    match cli.command {
        Command::Lexicon(a) => data::lexicon(&ctx, a, cli.lexicon.as_deref()),
        Command::Ingest(a) => data::ingest(&ctx, a),
        Command::Synth(a) => data::synth(&ctx, a),
        Command::Trends(a) => diffusion::trends(&ctx, a),
        Command::Pmi(a) => diffusion::pmi(&ctx, a),
        Command::Proxy(a) => diffusion::proxy(&ctx, a),
        Command::Correlate(a) => diffusion::correlate(a),
        Command::Sentiment(a) => sentiment::run(&ctx, a),
        Command::Train(a) => model::train(&ctx, a),
        Command::Split(a) => model::split(a),
        Command::Predict(a) => model::predict(&ctx, a),
        Command::Salience(a) => model::salience(a),
        Command::Surrogates(a) => model::surrogates(&ctx, a),
        Command::Substitute(a) => model::substitute(&ctx, a),
        Command::Evaluate(a) => model::evaluate(&ctx, a),
        Command::Annotate(a) => annotate::run(&ctx, a),
        Command::Pipeline(a) => pipeline::run(a, cli.lexicon),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn lists_split_on_commas() {
        assert_eq!(split_list(&["a,b".into(), " c ".into()]), ["a", "b", "c"]);
    }
}
