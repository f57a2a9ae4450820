//! Frequency-share trends, PMI word association, the hashtag community
//! proxy and the correlation statistics used to relate them.

mod appendix;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Granularity, TimeBucket, TokenKind, TokenizedPost};
use crate::lexicon::{EmojiId, EmojiVersion, Lexicon};

pub use appendix::{load_appendix, AppendixError, AppendixRow};
pub use stats::{
    average_ranks, correlate, kendall_tau, pearson, pearson_log, rounding_half_unit, sensitivity, spearman,
    spearman_p_value, Correlation, CorrelationMethod, Sensitivity, StatsError,
};

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Emoji occurrence counts per bucket. Mergeable, so shards can be counted
/// independently.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmojiCounts {
    pub per_bucket: BTreeMap<TimeBucket, HashMap<EmojiId, u64>>,
}

impl EmojiCounts {
    pub fn count<'a>(
        posts: impl IntoIterator<Item = &'a TokenizedPost>,
        granularity: Granularity,
        lexicon: &Lexicon,
    ) -> EmojiCounts {
        let mut out = EmojiCounts::default();
        for p in posts {
            let mut emojis = p.emojis(lexicon).peekable();
            if emojis.peek().is_none() {
                continue;
            }
            let bucket = out.per_bucket.entry(p.bucket(granularity)).or_default();
            for e in emojis {
                *bucket.entry(e).or_default() += 1;
            }
        }
        out
    }

    pub fn merge(&mut self, other: EmojiCounts) {
        for (bucket, counts) in other.per_bucket {
            let mine = self.per_bucket.entry(bucket).or_default();
            for (e, c) in counts {
                *mine.entry(e).or_default() += c;
            }
        }
    }

    pub fn total(&self, bucket: TimeBucket) -> u64 {
        self.per_bucket.get(&bucket).map_or(0, |m| m.values().sum())
    }

    pub fn get(&self, bucket: TimeBucket, emoji: EmojiId) -> u64 {
        self.per_bucket.get(&bucket).and_then(|m| m.get(&emoji)).copied().unwrap_or(0)
    }

    /// Emojis in order of total occurrences (descending, then by id).
    pub fn most_frequent(&self) -> Vec<(EmojiId, u64)> {
        let mut totals: HashMap<EmojiId, u64> = HashMap::new();
        for m in self.per_bucket.values() {
            for (&e, &c) in m {
                *totals.entry(e).or_default() += c;
            }
        }
        let mut v: Vec<_> = totals.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// First bucket in which any emoji satisfying `pred` occurs.
    pub fn first_appearance(&self, mut pred: impl FnMut(EmojiId) -> bool) -> Option<TimeBucket> {
        self.per_bucket.iter().find(|(_, m)| m.iter().any(|(&e, &c)| c > 0 && pred(e))).map(|(b, _)| *b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub bucket: TimeBucket,
    pub count: u64,
    /// `count` over all emoji occurrences in the bucket.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub emoji: String,
    pub granularity: Granularity,
    pub points: Vec<FrequencyPoint>,
}

/// Occurrence counts and shares per bucket for each requested emoji.
/// Buckets with no emoji occurrences at all have no point.
pub fn frequency_trend(
    corpus: &Corpus,
    emojis: &[EmojiId],
    granularity: Granularity,
    lexicon: &Lexicon,
) -> Result<Vec<FrequencySeries>, DiffusionError> {
    if corpus.is_empty() {
        return Err(DiffusionError::EmptyCorpus);
    }
    let counts = EmojiCounts::count(corpus.iter(), granularity, lexicon);
    Ok(series_from_counts(&counts, emojis, granularity, lexicon))
}

pub fn series_from_counts(
    counts: &EmojiCounts,
    emojis: &[EmojiId],
    granularity: Granularity,
    lexicon: &Lexicon,
) -> Vec<FrequencySeries> {
    emojis
        .iter()
        .map(|&e| {
            let base = lexicon.base(e);
            let points = counts
                .per_bucket
                .iter()
                .filter_map(|(&bucket, m)| {
                    let total: u64 = m.values().sum();
                    (total > 0).then(|| {
                        let count = m.get(&base).copied().unwrap_or(0);
                        FrequencyPoint { bucket, count, share: count as f64 / total as f64 }
                    })
                })
                .collect();
            FrequencySeries { emoji: lexicon.render(base), granularity, points }
        })
        .collect()
}

/// `ln(p(e,w) / (p(e) p(w)))` with `p = count / n`.
pub fn pmi_from_counts(n: u64, n_e: u64, n_w: u64, n_ew: u64) -> f64 {
    let p = |c: u64| c as f64 / n as f64;
    (p(n_ew) / (p(n_e) * p(n_w))).ln()
}

#[derive(Debug, Clone)]
pub struct PmiOptions {
    /// Minimum number of posts containing both the emoji and the word.
    pub min_support: u64,
    pub top_k: Option<usize>,
    /// Count hashtags (as `#tag`) as words.
    pub include_hashtags: bool,
}

impl Default for PmiOptions {
    fn default() -> Self {
        PmiOptions { min_support: 5, top_k: None, include_hashtags: true }
    }
}

/// Per-post document counts for one emoji. Mergeable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PmiCounts {
    pub n: u64,
    pub n_e: u64,
    /// word → (posts with the word, posts with the word and the emoji)
    pub words: HashMap<String, (u64, u64)>,
}

impl PmiCounts {
    pub fn count<'a>(
        posts: impl IntoIterator<Item = &'a TokenizedPost>,
        emoji: EmojiId,
        lexicon: &Lexicon,
        include_hashtags: bool,
    ) -> PmiCounts {
        let base = lexicon.base(emoji);
        let mut out = PmiCounts::default();
        for p in posts {
            out.n += 1;
            let has = p.contains_emoji(base, lexicon);
            out.n_e += has as u64;
            let words: HashSet<_> = p
                .tokens
                .iter()
                .filter(|t| t.kind == TokenKind::Word || (include_hashtags && t.kind == TokenKind::Hashtag))
                .map(|t| t.feature(lexicon))
                .collect();
            for w in words {
                let e = out.words.entry(w.into_owned()).or_default();
                e.0 += 1;
                e.1 += has as u64;
            }
        }
        out
    }

    pub fn merge(&mut self, other: PmiCounts) {
        self.n += other.n;
        self.n_e += other.n_e;
        for (w, (a, b)) in other.words {
            let e = self.words.entry(w).or_default();
            e.0 += a;
            e.1 += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiRow {
    pub word: String,
    pub pmi: f64,
    pub joint_count: u64,
    pub word_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationTable {
    pub emoji: String,
    /// Human-readable description of the slice, e.g. a bucket label.
    pub slice: String,
    pub n: u64,
    pub n_e: u64,
    pub rows: Vec<PmiRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub fn association_from_counts(counts: &PmiCounts, emoji: &str, slice: &str, opts: &PmiOptions) -> AssociationTable {
    let mut table = AssociationTable {
        emoji: emoji.to_string(),
        slice: slice.to_string(),
        n: counts.n,
        n_e: counts.n_e,
        rows: Vec::new(),
        diagnostic: None,
    };
    if counts.n_e == 0 {
        table.diagnostic = Some(format!("{emoji} does not occur in {slice} ({} posts)", counts.n));
        return table;
    }
    table.rows = counts
        .words
        .iter()
        .filter(|(_, &(_, joint))| joint >= opts.min_support.max(1))
        .map(|(w, &(n_w, joint))| PmiRow {
            word: w.clone(),
            pmi: pmi_from_counts(counts.n, counts.n_e, n_w, joint),
            joint_count: joint,
            word_count: n_w,
        })
        .collect();
    table
        .rows
        .sort_by(|a, b| b.pmi.total_cmp(&a.pmi).then(b.joint_count.cmp(&a.joint_count)).then(a.word.cmp(&b.word)));
    if let Some(k) = opts.top_k {
        table.rows.truncate(k);
    }
    table
}

/// PMI between `emoji` and every word over `posts`, using per-post
/// indicator probabilities and the natural log.
pub fn pmi_table<'a>(
    posts: impl IntoIterator<Item = &'a TokenizedPost>,
    emoji: EmojiId,
    slice: &str,
    lexicon: &Lexicon,
    opts: &PmiOptions,
) -> AssociationTable {
    let counts = PmiCounts::count(posts, emoji, lexicon, opts.include_hashtags);
    association_from_counts(&counts, &lexicon.render(lexicon.base(emoji)), slice, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityProxy {
    pub emoji: String,
    pub bucket: TimeBucket,
    /// Co-occurring hashtags with their occurrence counts in the bucket,
    /// most popular first.
    pub hashtags: Vec<(String, u64)>,
    /// Mean bucket count over co-occurring hashtags; 0 when there are none.
    pub mean: f64,
    pub total: u64,
}

/// Popularity of the hashtags that co-occur with `emoji` in `bucket`.
pub fn community_proxy(corpus: &Corpus, emoji: EmojiId, bucket: TimeBucket, lexicon: &Lexicon) -> CommunityProxy {
    let base = lexicon.base(emoji);
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut with_emoji: BTreeSet<&str> = BTreeSet::new();
    for p in corpus.in_bucket(bucket) {
        let has = p.contains_emoji(base, lexicon);
        for h in p.hashtags() {
            *counts.entry(h).or_default() += 1;
            if has {
                with_emoji.insert(h);
            }
        }
    }
    let mut hashtags: Vec<(String, u64)> = with_emoji.into_iter().map(|h| (h.to_string(), counts[h])).collect();
    hashtags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total: u64 = hashtags.iter().map(|h| h.1).sum();
    let mean = if hashtags.is_empty() { 0.0 } else { total as f64 / hashtags.len() as f64 };
    CommunityProxy { emoji: lexicon.render(base), bucket, hashtags, mean, total }
}

/// Offsets (in buckets) of the early and late stages: early is `early`
/// buckets after a version's first appearance, late is `late` after early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOffsets {
    pub early: u32,
    pub late: u32,
}

impl Default for StageOffsets {
    fn default() -> Self {
        StageOffsets { early: 2, late: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub first: TimeBucket,
    pub early: TimeBucket,
    pub late: TimeBucket,
}

/// Stage buckets for the emojis of `version`, or `None` if none occur.
pub fn version_stages(
    counts: &EmojiCounts,
    version: EmojiVersion,
    offsets: StageOffsets,
    lexicon: &Lexicon,
) -> Option<Stages> {
    let first = counts.first_appearance(|e| lexicon.get(e).version == version)?;
    let early = first.advance(offsets.early);
    Some(Stages { first, early, late: early.advance(offsets.late) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPair {
    pub emoji: String,
    pub hashtag_mean: f64,
    pub hashtag_total: u64,
    pub late_count: u64,
}

/// Early-stage hashtag popularity against late-stage emoji counts for the
/// `top` most used emojis of `version` in the late stage.
pub fn proxy_pairs(
    corpus: &Corpus,
    counts: &EmojiCounts,
    version: EmojiVersion,
    stages: Stages,
    top: usize,
    lexicon: &Lexicon,
) -> Vec<ProxyPair> {
    let mut late: Vec<(EmojiId, u64)> = counts
        .per_bucket
        .get(&stages.late)
        .map(|m| m.iter().filter(|(&e, _)| lexicon.get(e).version == version).map(|(&e, &c)| (e, c)).collect())
        .unwrap_or_default();
    late.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    late.truncate(top);
    late.into_iter()
        .map(|(e, c)| {
            let proxy = community_proxy(corpus, e, stages.early, lexicon);
            ProxyPair { emoji: proxy.emoji, hashtag_mean: proxy.mean, hashtag_total: proxy.total, late_count: c }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Post;
    use chrono::{DateTime, Duration, Utc};
    use proptest::prelude::*;

    fn corpus(texts: &[(&str, i64)]) -> Corpus {
        let t0: DateTime<Utc> = "2019-01-01T00:00:00Z".parse().unwrap();
        let posts = texts.iter().enumerate().map(|(i, (t, day))| Post {
            id: i.to_string(),
            created_at: t0 + Duration::days(*day),
            text: t.to_string(),
            lang: None,
        });
        Corpus::from_posts(posts, &Lexicon::bundled())
    }

    fn id(e: &str) -> EmojiId {
        Lexicon::bundled().lookup(e).unwrap()
    }

    #[test]
    fn shares_are_occurrence_ratios() {
        let l = Lexicon::bundled();
        let c = corpus(&[("😂 😂", 0), ("🔥", 1), ("no emoji", 2)]);
        let s = frequency_trend(&c, &[id("😂"), id("🔥")], Granularity::Month, &l).unwrap();
        assert_eq!(s[0].points[0].count, 2);
        assert!((s[0].points[0].share - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1].points[0].share - 1.0 / 3.0).abs() < 1e-15);
        let single = corpus(&[("🔥", 0)]);
        assert_eq!(frequency_trend(&single, &[id("🔥")], Granularity::Month, &l).unwrap()[0].points[0].share, 1.0);
        assert_eq!(frequency_trend(&Corpus::default(), &[], Granularity::Month, &l), Err(DiffusionError::EmptyCorpus));
    }

    #[test]
    fn empty_buckets_are_absent() {
        let l = Lexicon::bundled();
        let c = corpus(&[("🔥", 0), ("words only", 40), ("🔥", 70)]);
        let s = frequency_trend(&c, &[id("🔥")], Granularity::Month, &l).unwrap();
        let buckets: Vec<String> = s[0].points.iter().map(|p| p.bucket.to_string()).collect();
        assert_eq!(buckets, ["2019-01", "2019-03"]);
    }

    #[test]
    fn pmi_independence_is_zero() {
        let l = Lexicon::bundled();
        let c = corpus(&[("🥳 w", 0), ("🥳", 0), ("w", 0), ("x", 0)]);
        let opts = PmiOptions { min_support: 1, ..Default::default() };
        let t = pmi_table(c.iter(), id("🥳"), "all", &l, &opts);
        let row = t.rows.iter().find(|r| r.word == "w").unwrap();
        assert_eq!(row.pmi, 0.0);
    }

    #[test]
    fn pmi_eight_posts_ln4() {
        let l = Lexicon::bundled();
        let c = corpus(&[("🥳 w", 0), ("🥳 w", 0), ("a", 0), ("b", 0), ("c", 0), ("d", 0), ("e", 0), ("f", 0)]);
        let opts = PmiOptions { min_support: 1, ..Default::default() };
        let t = pmi_table(c.iter(), id("🥳"), "all", &l, &opts);
        assert_eq!(t.rows[0].word, "w");
        assert!((t.rows[0].pmi - 4f64.ln()).abs() < 1e-15);
        assert!((t.rows[0].pmi - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn pmi_absent_emoji_diagnostic() {
        let l = Lexicon::bundled();
        let c = corpus(&[("a", 0)]);
        let t = pmi_table(c.iter(), id("🥳"), "2019-W01", &l, &PmiOptions::default());
        assert!(t.rows.is_empty());
        assert!(t.diagnostic.unwrap().contains("2019-W01"));
    }

    #[test]
    fn pmi_min_support_filters() {
        let l = Lexicon::bundled();
        let mut texts = vec![("🥳 party", 0); 5];
        texts.push(("🥳 rare", 0));
        let c = corpus(&texts);
        let t = pmi_table(c.iter(), id("🥳"), "all", &l, &PmiOptions::default());
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows.iter().all(|r| r.joint_count >= 5));
    }

    #[test]
    fn proxy_mean_and_total() {
        let l = Lexicon::bundled();
        let b: TimeBucket = "2019-01".parse().unwrap();
        let mut texts = vec![("🫂 #h", 0)];
        texts.extend(std::iter::repeat_n(("#h", 1), 9));
        let c = corpus(&texts);
        let p = community_proxy(&c, id("🫂"), b, &l);
        assert_eq!(p.mean, 10.0);

        let mut texts = vec![("🫂 #a #b", 0)];
        texts.extend(std::iter::repeat_n(("#a", 1), 9));
        texts.extend(std::iter::repeat_n(("#b", 1), 29));
        let p = community_proxy(&corpus(&texts), id("🫂"), b, &l);
        assert_eq!(p.mean, 20.0);
        assert_eq!(p.total, 40);
        assert_eq!(p.hashtags[0], ("b".to_string(), 30));

        let p = community_proxy(&corpus(&[("🫂", 0), ("#z", 0)]), id("🫂"), b, &l);
        assert_eq!((p.mean, p.total), (0.0, 0));
    }

    #[test]
    fn stages_from_first_appearance() {
        let l = Lexicon::bundled();
        let c = corpus(&[("🔥", 0), ("🥲", 40), ("🥲", 100)]);
        let counts = EmojiCounts::count(c.iter(), Granularity::Month, &l);
        let s = version_stages(&counts, "13.0".parse().unwrap(), StageOffsets::default(), &l).unwrap();
        assert_eq!(s.first.to_string(), "2019-02");
        assert_eq!(s.early.to_string(), "2019-04");
        assert_eq!(s.late.to_string(), "2020-04");
        assert!(version_stages(&counts, "14.0".parse().unwrap(), StageOffsets::default(), &l).is_none());
    }

    fn doc_strategy() -> impl Strategy<Value = Vec<(Vec<usize>, bool)>> {
        prop::collection::vec((prop::collection::vec(0usize..6, 0..5), any::<bool>()), 1..40)
    }

    fn docs_to_corpus(docs: &[(Vec<usize>, bool)]) -> Corpus {
        let words = ["a", "b", "c", "d", "e", "f"];
        let texts: Vec<String> = docs
            .iter()
            .map(|(ws, e)| {
                let mut t: Vec<&str> = ws.iter().map(|&i| words[i]).collect();
                if *e {
                    t.push("🥳");
                }
                t.join(" ")
            })
            .collect();
        corpus(&texts.iter().map(|t| (t.as_str(), 0)).collect::<Vec<_>>())
    }

    proptest! {
        /// Oracle: count per-post indicators directly for every word.
        #[test]
        fn pmi_matches_brute_force(docs in doc_strategy()) {
            let l = Lexicon::bundled();
            let c = docs_to_corpus(&docs);
            let opts = PmiOptions { min_support: 1, ..Default::default() };
            let t = pmi_table(c.iter(), id("🥳"), "all", &l, &opts);
            let n = docs.len() as u64;
            let n_e = docs.iter().filter(|d| d.1).count() as u64;
            for row in &t.rows {
                let w = ["a", "b", "c", "d", "e", "f"].iter().position(|x| *x == row.word).unwrap();
                let n_w = docs.iter().filter(|d| d.0.contains(&w)).count() as u64;
                let n_ew = docs.iter().filter(|d| d.1 && d.0.contains(&w)).count() as u64;
                let expected = ((n_ew as f64 / n as f64) / ((n_e as f64 / n as f64) * (n_w as f64 / n as f64))).ln();
                prop_assert_eq!(row.pmi, expected);
                prop_assert_eq!(row.joint_count, n_ew);
                // swapping roles leaves the value unchanged
                prop_assert_eq!(pmi_from_counts(n, n_w, n_e, n_ew), pmi_from_counts(n, n_e, n_w, n_ew));
            }
            for pair in t.rows.windows(2) {
                prop_assert!(pair[0].pmi >= pair[1].pmi);
            }
        }

        #[test]
        fn pmi_ranking_invariant_to_duplication(docs in doc_strategy()) {
            let l = Lexicon::bundled();
            let opts = PmiOptions { min_support: 1, ..Default::default() };
            let once = pmi_table(docs_to_corpus(&docs).iter(), id("🥳"), "all", &l, &opts);
            let doubled: Vec<_> = docs.iter().chain(docs.iter()).cloned().collect();
            let twice = pmi_table(docs_to_corpus(&doubled).iter(), id("🥳"), "all", &l, &opts);
            let a: Vec<_> = once.rows.iter().map(|r| (&r.word, r.pmi)).collect();
            let b: Vec<_> = twice.rows.iter().map(|r| (&r.word, r.pmi)).collect();
            prop_assert_eq!(a.len(), b.len());
            for ((wa, pa), (wb, pb)) in a.iter().zip(&b) {
                prop_assert_eq!(wa, wb);
                prop_assert!((pa - pb).abs() < 1e-12);
            }
        }

        #[test]
        fn shares_sum_to_one(picks in prop::collection::vec((0usize..5, 0i64..90), 1..60)) {
            let l = Lexicon::bundled();
            let pool = ["😂", "🔥", "🥺", "🥲", "✨"];
            let texts: Vec<(&str, i64)> = picks.iter().map(|&(i, d)| (pool[i], d)).collect();
            let c = corpus(&texts);
            let all: Vec<EmojiId> = pool.iter().map(|e| id(e)).collect();
            let series = frequency_trend(&c, &all, Granularity::Month, &l).unwrap();
            let mut sums: BTreeMap<TimeBucket, f64> = BTreeMap::new();
            for s in &series {
                for p in &s.points {
                    prop_assert!((0.0..=1.0).contains(&p.share));
                    *sums.entry(p.bucket).or_default() += p.share;
                }
                for w in s.points.windows(2) {
                    prop_assert!(w[0].bucket < w[1].bucket);
                }
            }
            for v in sums.values() {
                prop_assert!((v - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn counts_merge_like_whole(picks in prop::collection::vec((0usize..5, 0i64..90), 2..40), cut in 0usize..40) {
            let l = Lexicon::bundled();
            let pool = ["😂", "🔥", "🥺", "🥲", "✨"];
            let texts: Vec<(&str, i64)> = picks.iter().map(|&(i, d)| (pool[i], d)).collect();
            let c = corpus(&texts);
            let cut = cut.min(c.len());
            let whole = EmojiCounts::count(c.iter(), Granularity::Week, &l);
            let mut left = EmojiCounts::count(c.posts[..cut].iter(), Granularity::Week, &l);
            left.merge(EmojiCounts::count(c.posts[cut..].iter(), Granularity::Week, &l));
            prop_assert_eq!(whole, left);
        }
    }
}
