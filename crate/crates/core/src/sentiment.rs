//! Lexicon-driven compound sentiment scoring and per-emoji sentiment
//! trends and distributions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus, Granularity, TimeBucket, Token, TokenKind, TokenizedPost};
use crate::lexicon::{EmojiId, Lexicon};

pub const NORMALIZATION_ALPHA: f64 = 15.0;
pub const NEGATION_SCALAR: f64 = -0.74;
pub const NEGATION_WINDOW: usize = 3;
const BOOSTER_DECAY: [f64; 3] = [1.0, 0.95, 0.9];

/// `x / sqrt(x² + 15)`.
pub fn normalize_compound(x: f64) -> f64 {
    x / (x * x + NORMALIZATION_ALPHA).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Neutral => "neutral",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "neutral" => Ok(Polarity::Neutral),
            "negative" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{0:?} is both a negator and a booster")]
    Overlap(String),
    #[error("cannot read lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ValenceLexicon {
    entries: HashMap<String, f64>,
    negators: HashSet<String>,
    boosters: HashMap<String, f64>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_pairs(file: &str, text: &str) -> Result<HashMap<String, f64>, SentimentError> {
    let mut out = HashMap::new();
    for (line, l) in data_lines(text) {
        let err = |msg: String| SentimentError::Parse { file: file.into(), line, msg };
        let (word, value) = l.split_once('\t').ok_or_else(|| err("expected word<TAB>value".into()))?;
        let value: f64 = value.trim().parse().map_err(|_| err(format!("bad number {value:?}")))?;
        if !value.is_finite() {
            return Err(err("value must be finite".into()));
        }
        out.insert(word.trim().to_lowercase(), value);
    }
    Ok(out)
}

impl ValenceLexicon {
    pub fn bundled() -> ValenceLexicon {
        ValenceLexicon::from_parts(
            include_str!("../data/sentiment/valence.tsv"),
            include_str!("../data/sentiment/negators.txt"),
            include_str!("../data/sentiment/boosters.tsv"),
        )
        .expect("bundled sentiment lexicon is valid")
    }

    pub fn from_parts(valence: &str, negators: &str, boosters: &str) -> Result<ValenceLexicon, SentimentError> {
        let entries = parse_pairs("valence.tsv", valence)?;
        let boosters = parse_pairs("boosters.tsv", boosters)?;
        let negators: HashSet<String> = data_lines(negators).map(|(_, l)| l.to_lowercase()).collect();
        if let Some(w) = negators.iter().find(|w| boosters.contains_key(*w)) {
            return Err(SentimentError::Overlap(w.clone()));
        }
        Ok(ValenceLexicon { entries, negators, boosters })
    }

    /// Reads `valence.tsv`, `negators.txt` and `boosters.tsv` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<ValenceLexicon, SentimentError> {
        let dir = dir.as_ref();
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        ValenceLexicon::from_parts(&read("valence.tsv")?, &read("negators.txt")?, &read("boosters.tsv")?)
    }

    pub fn valence(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn is_negator(&self, word: &str) -> bool {
        self.negators.contains(word)
    }

    pub fn booster(&self, word: &str) -> Option<f64> {
        self.boosters.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, word: impl Into<String>, valence: f64) {
        self.entries.insert(word.into(), valence);
    }

    /// Flips the sign of every valence.
    pub fn negated(&self) -> ValenceLexicon {
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            *v = -*v;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Scorer {
    pub lexicon: ValenceLexicon,
    /// Look emojis (base-folded) up in the valence table too. Off by default.
    pub include_emojis: bool,
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::new(ValenceLexicon::bundled())
    }
}

impl Scorer {
    pub fn new(lexicon: ValenceLexicon) -> Scorer {
        Scorer { lexicon, include_emojis: false }
    }

    /// Unnormalized valence sum over a word sequence.
    pub fn raw_words<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let mut total = 0.0;
        for (i, w) in words.iter().enumerate() {
            let Some(mut v) = self.lexicon.valence(w.as_ref()) else { continue };
            let mut negated = false;
            for back in 1..=NEGATION_WINDOW.min(i) {
                let prev = words[i - back].as_ref();
                if let Some(b) = self.lexicon.booster(prev) {
                    if v != 0.0 {
                        v += b * v.signum() * BOOSTER_DECAY[back - 1];
                    }
                }
                negated |= self.lexicon.is_negator(prev);
            }
            if negated {
                v *= NEGATION_SCALAR;
            }
            total += v;
        }
        total
    }

    pub fn score_words<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        normalize_compound(self.raw_words(words))
    }

    /// Compound score of a token sequence. Hashtags are skipped; emojis are
    /// skipped unless `include_emojis` is set.
    pub fn score_tokens(&self, tokens: &[Token], lexicon: &Lexicon) -> f64 {
        let words: Vec<_> = tokens
            .iter()
            .filter_map(|t| match t.kind {
                TokenKind::Word => Some(t.feature(lexicon)),
                TokenKind::Emoji if self.include_emojis => Some(t.feature(lexicon)),
                _ => None,
            })
            .collect();
        self.score_words(&words)
    }

    pub fn score_text(&self, text: &str, lexicon: &Lexicon) -> f64 {
        self.score_tokens(&tokenize(text, lexicon), lexicon)
    }

    pub fn score_post(&self, post: &TokenizedPost, lexicon: &Lexicon) -> f64 {
        self.score_tokens(&post.tokens, lexicon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentPoint {
    pub bucket: TimeBucket,
    pub mean_score: f64,
    pub post_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSeries {
    pub emoji: String,
    pub granularity: Granularity,
    pub points: Vec<SentimentPoint>,
}

/// Per-bucket mean score of posts containing `emoji`. Buckets without such
/// posts are omitted.
pub fn sentiment_trend(
    corpus: &Corpus,
    emoji: EmojiId,
    granularity: Granularity,
    scorer: &Scorer,
    lexicon: &Lexicon,
) -> SentimentSeries {
    let base = lexicon.base(emoji);
    let mut acc: BTreeMap<TimeBucket, (f64, usize)> = BTreeMap::new();
    for p in corpus.iter().filter(|p| p.contains_emoji(base, lexicon)) {
        let e = acc.entry(p.bucket(granularity)).or_default();
        e.0 += scorer.score_post(p, lexicon);
        e.1 += 1;
    }
    SentimentSeries {
        emoji: lexicon.render(base),
        granularity,
        points: acc
            .into_iter()
            .map(|(bucket, (sum, n))| SentimentPoint { bucket, mean_score: sum / n as f64, post_count: n })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` equally spaced edges over [-1, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub n: usize,
    pub mean: f64,
}

impl Histogram {
    pub fn new(scores: &[f64], bins: usize) -> Histogram {
        assert!(bins > 0, "histogram needs at least one bin");
        let edges = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &s in scores {
            let i = (((s + 1.0) / 2.0) * bins as f64).floor();
            counts[(i.max(0.0) as usize).min(bins - 1)] += 1;
        }
        let mean = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
        Histogram { edges, counts, n: scores.len(), mean }
    }
}

fn scores_in(corpus: &Corpus, emoji: EmojiId, buckets: &[TimeBucket], scorer: &Scorer, lexicon: &Lexicon) -> Vec<f64> {
    let base = lexicon.base(emoji);
    corpus
        .iter()
        .filter(|p| buckets.iter().any(|b| b.contains(p.timestamp())))
        .filter(|p| p.contains_emoji(base, lexicon))
        .map(|p| scorer.score_post(p, lexicon))
        .collect()
}

/// Score distribution of posts containing `emoji` within `buckets`.
pub fn sentiment_histogram(
    corpus: &Corpus,
    emoji: EmojiId,
    buckets: &[TimeBucket],
    bins: usize,
    scorer: &Scorer,
    lexicon: &Lexicon,
) -> Histogram {
    Histogram::new(&scores_in(corpus, emoji, buckets, scorer, lexicon), bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceComparison {
    pub early: Histogram,
    pub late: Histogram,
    /// `late.mean - early.mean`.
    pub mean_difference: f64,
}

pub fn compare_slices(
    corpus: &Corpus,
    emoji: EmojiId,
    early: &[TimeBucket],
    late: &[TimeBucket],
    bins: usize,
    scorer: &Scorer,
    lexicon: &Lexicon,
) -> SliceComparison {
    let early = sentiment_histogram(corpus, emoji, early, bins, scorer, lexicon);
    let late = sentiment_histogram(corpus, emoji, late, bins, scorer, lexicon);
    let mean_difference = late.mean - early.mean;
    SliceComparison { early, late, mean_difference }
}
