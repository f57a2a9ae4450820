//! Post ingestion, tokenization, time bucketing and synthetic corpora.

mod bucket;
pub mod synth;
mod tokenize;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{EmojiId, Lexicon};

pub use bucket::{Granularity, TimeBucket};
pub use tokenize::{render_tokens, tokenize, tokenize_with_stats, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedPost {
    pub post: Post,
    pub tokens: Vec<Token>,
}

impl TokenizedPost {
    pub fn new(post: Post, lexicon: &Lexicon) -> TokenizedPost {
        let tokens = tokenize(&post.text, lexicon);
        TokenizedPost { post, tokens }
    }

    pub fn id(&self) -> &str {
        &self.post.id
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.post.created_at
    }

    pub fn bucket(&self, granularity: Granularity) -> TimeBucket {
        TimeBucket::of(self.post.created_at, granularity)
    }

    /// Base-folded emoji ids in text order (with repeats).
    pub fn emojis<'a>(&'a self, lexicon: &'a Lexicon) -> impl Iterator<Item = EmojiId> + 'a {
        self.tokens.iter().filter_map(move |t| t.emoji.map(|id| lexicon.base(id)))
    }

    pub fn contains_emoji(&self, base: EmojiId, lexicon: &Lexicon) -> bool {
        self.emojis(lexicon).any(|e| e == base)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter(|t| t.kind == TokenKind::Word).map(|t| t.surface.as_str())
    }

    pub fn hashtags(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter(|t| t.kind == TokenKind::Hashtag).map(|t| t.surface.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    pub valid: usize,
    pub invalid: usize,
    pub duplicate_ids: usize,
    pub filtered_lang: usize,
    pub deduplicated: usize,
    pub out_of_range: usize,
    pub unknown_emoji_scalars: usize,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Fatal when invalid lines exceed this fraction of non-blank lines.
    pub max_invalid_fraction: f64,
    pub lang: Option<String>,
    pub dedupe: bool,
    /// Half-open `[start, end)` range; posts outside are dropped.
    pub range: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { max_invalid_fraction: 0.10, lang: None, dedupe: false, range: None }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read posts: {0}")]
    Io(#[from] std::io::Error),
    #[error("{invalid} of {lines} lines invalid (threshold {threshold:.0}%)", threshold = .max_fraction * 100.0)]
    TooManyInvalid { invalid: usize, lines: usize, max_fraction: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub posts: Vec<TokenizedPost>,
    pub stats: IngestStats,
}

impl Corpus {
    pub fn from_posts(posts: impl IntoIterator<Item = Post>, lexicon: &Lexicon) -> Corpus {
        let posts: Vec<_> = posts.into_iter().map(|p| TokenizedPost::new(p, lexicon)).collect();
        let stats = IngestStats { lines: posts.len(), valid: posts.len(), ..Default::default() };
        Corpus { posts, stats }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TokenizedPost> {
        self.posts.iter()
    }

    /// Posts whose timestamp falls in `bucket`.
    pub fn in_bucket(&self, bucket: TimeBucket) -> impl Iterator<Item = &TokenizedPost> {
        self.posts.iter().filter(move |p| bucket.contains(p.timestamp()))
    }

    pub fn buckets(&self, granularity: Granularity) -> Vec<TimeBucket> {
        let mut b: Vec<_> = self.posts.iter().map(|p| p.bucket(granularity)).collect();
        b.sort();
        b.dedup();
        b
    }
}

#[derive(Deserialize)]
struct RawPost {
    id: serde_json::Value,
    created_at: String,
    text: String,
    #[serde(default)]
    lang: Option<String>,
}

fn parse_line(line: &str) -> Option<Post> {
    let raw: RawPost = serde_json::from_str(line).ok()?;
    let id = match raw.id {
        serde_json::Value::String(s) if !s.is_empty() => s,
        serde_json::Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let created_at = DateTime::parse_from_rfc3339(&raw.created_at).ok()?.with_timezone(&Utc);
    Some(Post { id, created_at, text: raw.text, lang: raw.lang })
}

/// Reads JSON Lines posts, tokenizing each valid line. Invalid lines and
/// repeated ids are skipped and tallied; `#` comment lines are ignored.
pub fn ingest_reader(reader: impl Read, lexicon: &Lexicon, opts: &IngestOptions) -> Result<Corpus, IngestError> {
    let mut stats = IngestStats::default();
    let mut posts = Vec::new();
    let mut ids = HashSet::new();
    let mut texts = HashSet::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        stats.lines += 1;
        let Some(post) = parse_line(&line) else {
            stats.invalid += 1;
            continue;
        };
        if !ids.insert(post.id.clone()) {
            stats.invalid += 1;
            stats.duplicate_ids += 1;
            continue;
        }
        if let (Some(want), Some(have)) = (&opts.lang, &post.lang) {
            if !want.eq_ignore_ascii_case(have) {
                stats.filtered_lang += 1;
                continue;
            }
        }
        if let Some((start, end)) = opts.range {
            if post.created_at < start || post.created_at >= end {
                stats.out_of_range += 1;
                continue;
            }
        }
        if opts.dedupe && !texts.insert(post.text.clone()) {
            stats.deduplicated += 1;
            continue;
        }
        let (tokens, unknown) = tokenize_with_stats(&post.text, lexicon);
        stats.unknown_emoji_scalars += unknown;
        stats.valid += 1;
        posts.push(TokenizedPost { post, tokens });
    }
    if stats.lines > 0 && stats.invalid as f64 > opts.max_invalid_fraction * stats.lines as f64 {
        return Err(IngestError::TooManyInvalid {
            invalid: stats.invalid,
            lines: stats.lines,
            max_fraction: opts.max_invalid_fraction,
        });
    }
    Ok(Corpus { posts, stats })
}

pub fn ingest(path: impl AsRef<Path>, lexicon: &Lexicon, opts: &IngestOptions) -> Result<Corpus, IngestError> {
    ingest_reader(File::open(path)?, lexicon, opts)
}

/// Writes posts as JSON Lines.
pub fn write_posts(mut w: impl std::io::Write, posts: &[Post]) -> std::io::Result<()> {
    for p in posts {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(input: &str, opts: &IngestOptions) -> Result<Corpus, IngestError> {
        ingest_reader(input.as_bytes(), &Lexicon::bundled(), opts)
    }

    #[test]
    fn single_line() {
        let c = run(
            r#"{"id":"1","created_at":"2019-01-01T00:00:00Z","text":"happy new year 🥳"}"#,
            &IngestOptions::default(),
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        let p = &c.posts[0];
        let surfaces: Vec<_> = p.tokens.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, ["happy", "new", "year", "🥳"]);
        assert_eq!(p.bucket(Granularity::Month).to_string(), "2019-01");
    }

    #[test]
    fn missing_text_is_tallied() {
        let input = "{\"id\":\"1\",\"created_at\":\"2019-01-01T00:00:00Z\"}\n";
        let opts = IngestOptions { max_invalid_fraction: 1.0, ..Default::default() };
        let c = run(input, &opts).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.stats.invalid, 1);
    }

    #[test]
    fn preserves_order() {
        let input = (1..=3)
            .map(|i| format!("{{\"id\":\"{i}\",\"created_at\":\"2019-01-0{i}T00:00:00Z\",\"text\":\"t{i}\"}}"))
            .collect::<Vec<_>>()
            .join("\n");
        let c = run(&input, &IngestOptions::default()).unwrap();
        let ids: Vec<_> = c.iter().map(|p| p.id()).collect();
        assert_eq!(ids, ["1", "2", "3"]);
    }

    #[test]
    fn too_many_invalid_is_fatal() {
        let mut input = String::from("not json\n");
        for i in 0..5 {
            input.push_str(&format!("{{\"id\":\"{i}\",\"created_at\":\"2019-01-01T00:00:00Z\",\"text\":\"x\"}}\n"));
        }
        let err = run(&input, &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::TooManyInvalid { invalid: 1, lines: 6, .. }));
        let relaxed = IngestOptions { max_invalid_fraction: 0.2, ..Default::default() };
        assert_eq!(run(&input, &relaxed).unwrap().len(), 5);
    }

    #[test]
    fn duplicate_ids_dedupe_and_lang() {
        let input = concat!(
            "{\"id\":\"1\",\"created_at\":\"2019-01-01T00:00:00Z\",\"text\":\"same\",\"lang\":\"en\"}\n",
            "{\"id\":\"2\",\"created_at\":\"2019-01-01T00:00:00Z\",\"text\":\"same\",\"lang\":\"en\"}\n",
            "{\"id\":\"3\",\"created_at\":\"2019-01-01T00:00:00Z\",\"text\":\"autre\",\"lang\":\"fr\"}\n",
            "{\"id\":\"1\",\"created_at\":\"2019-01-01T00:00:00Z\",\"text\":\"again\"}\n",
        );
        let loose = IngestOptions { max_invalid_fraction: 0.5, ..Default::default() };
        let c = run(input, &loose).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.stats.duplicate_ids, 1);

        let strict = IngestOptions { dedupe: true, lang: Some("en".into()), ..loose };
        let c = run(input, &strict).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.stats.deduplicated, 1);
        assert_eq!(c.stats.filtered_lang, 1);
    }
}
