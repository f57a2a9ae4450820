//! Seeded synthetic corpora with planted structure: logistic adoption
//! curves, per-emoji context vocabularies, cloned contexts for planted
//! surrogates, sentiment drift and one-off events.
//!
//! The generator returns a ledger next to the posts recording what was
//! planted for each post (bucket, emoji, sentiment label, target valence),
//! which tests use as ground truth.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Granularity, Post, TimeBucket};
use crate::lexicon::Lexicon;
use crate::sentiment::{normalize_compound, Polarity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedWord {
    pub word: String,
    pub weight: f64,
}

impl WeightedWord {
    pub fn new(word: impl Into<String>, weight: f64) -> Self {
        WeightedWord { word: word.into(), weight }
    }
}

/// `ceiling / (1 + exp(-rate * (bucket - midpoint)))`; `rate = 0` gives a
/// flat curve at `ceiling / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub ceiling: f64,
    pub rate: f64,
    pub midpoint: f64,
}

impl Logistic {
    pub fn at(&self, bucket: f64) -> f64 {
        self.ceiling / (1.0 + (-self.rate * (bucket - self.midpoint)).exp())
    }
}

/// Target mean compound score at bucket `b`: `start + slope * b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub start: f64,
    #[serde(default)]
    pub slope: f64,
}

impl Drift {
    pub fn at(&self, bucket: u32) -> f64 {
        (self.start + self.slope * bucket as f64).clamp(-0.99, 0.99)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmojiProfile {
    pub emoji: String,
    /// Word distribution of this emoji's contexts. Empty for planted
    /// surrogates, which clone their donor's profile.
    #[serde(default)]
    pub context: Vec<WeightedWord>,
    pub curve: Logistic,
    #[serde(default)]
    pub valence: Option<Drift>,
    #[serde(default)]
    pub hashtags: Vec<WeightedWord>,
    #[serde(default)]
    pub hashtag_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValencedWord {
    pub word: String,
    pub valence: f64,
}

/// Each non-neutral post gets exactly one sentiment word; it agrees with
/// the post's label with probability `signal`. The label mix per bucket is
/// chosen so the expected compound score equals the emoji's drift target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentPlan {
    pub positive: Vec<ValencedWord>,
    pub negative: Vec<ValencedWord>,
    #[serde(default)]
    pub neutral_share: f64,
    #[serde(default = "one")]
    pub signal: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub emoji: String,
    pub bucket: u32,
    pub words: Vec<String>,
    /// Per-word inclusion probability in the emoji's posts of that bucket.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub post_count: usize,
    /// Rounded down to the start of its bucket.
    pub start: DateTime<Utc>,
    pub granularity: Granularity,
    pub buckets: u32,
    /// Inclusive range of context/background words per post.
    pub words_per_post: [usize; 2],
    /// Probability that a word in an emoji post comes from the emoji's
    /// context profile rather than the background vocabulary.
    pub context_share: f64,
    pub vocabulary: Vec<WeightedWord>,
    pub no_emoji_weight: f64,
    pub emojis: Vec<EmojiProfile>,
    /// New emoji → old emoji whose context profile it clones.
    #[serde(default)]
    pub surrogates: BTreeMap<String, String>,
    #[serde(default)]
    pub sentiment: Option<SentimentPlan>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    /// Probability that an emoji is written twice in a post.
    #[serde(default)]
    pub repeat_rate: f64,
}

#[derive(Debug, Error)]
#[error("invalid synthetic spec: {}", .violations.join("; "))]
pub struct SynthError {
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: String,
    pub bucket: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emoji: Option<String>,
    /// Emoji whose context profile generated the words.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Polarity>,
    pub valence: f64,
    #[serde(default)]
    pub event: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthCorpus {
    pub posts: Vec<Post>,
    pub ledger: Vec<LedgerEntry>,
}

fn check_weights(field: &str, words: &[WeightedWord], v: &mut Vec<String>) {
    if words.is_empty() {
        v.push(format!("{field}: empty distribution"));
        return;
    }
    if words.iter().any(|w| !w.weight.is_finite() || w.weight < 0.0) {
        v.push(format!("{field}: weights must be finite and non-negative"));
    }
    if words.iter().map(|w| w.weight).sum::<f64>() <= 0.0 {
        v.push(format!("{field}: weights sum to zero"));
    }
    if words.iter().any(|w| w.word.trim().is_empty() || w.word.contains(char::is_whitespace)) {
        v.push(format!("{field}: words must be single non-empty tokens"));
    }
}

fn check_rate(field: &str, x: f64, v: &mut Vec<String>) {
    if !(0.0..=1.0).contains(&x) {
        v.push(format!("{field}: must be in [0, 1]"));
    }
}

impl SynthSpec {
    pub fn validate(&self, lexicon: &Lexicon) -> Result<(), SynthError> {
        let mut v = Vec::new();
        if self.buckets == 0 {
            v.push("buckets: must be at least 1".into());
        }
        if self.words_per_post[0] > self.words_per_post[1] {
            v.push("words_per_post: min exceeds max".into());
        }
        check_rate("context_share", self.context_share, &mut v);
        check_rate("repeat_rate", self.repeat_rate, &mut v);
        check_weights("vocabulary", &self.vocabulary, &mut v);
        if !self.no_emoji_weight.is_finite() || self.no_emoji_weight < 0.0 {
            v.push("no_emoji_weight: must be finite and non-negative".into());
        }
        let mut seen = HashMap::new();
        for (i, e) in self.emojis.iter().enumerate() {
            let field = format!("emojis[{i}]");
            if lexicon.lookup(&e.emoji).is_none() {
                v.push(format!("{field}.emoji: {:?} not in lexicon", e.emoji));
            }
            if seen.insert(e.emoji.as_str(), i).is_some() {
                v.push(format!("{field}.emoji: {:?} listed twice", e.emoji));
            }
            if e.context.is_empty() {
                if !self.surrogates.contains_key(&e.emoji) {
                    v.push(format!("{field}.context: empty and not a planted surrogate"));
                }
            } else {
                check_weights(&format!("{field}.context"), &e.context, &mut v);
            }
            if !e.hashtags.is_empty() {
                check_weights(&format!("{field}.hashtags"), &e.hashtags, &mut v);
            }
            check_rate(&format!("{field}.hashtag_rate"), e.hashtag_rate, &mut v);
            let c = e.curve;
            if !(c.ceiling.is_finite() && c.rate.is_finite() && c.midpoint.is_finite()) || c.ceiling < 0.0 {
                v.push(format!("{field}.curve: parameters must be finite with ceiling >= 0"));
            }
            if let Some(d) = e.valence {
                if !(d.start.is_finite() && d.slope.is_finite()) {
                    v.push(format!("{field}.valence: must be finite"));
                }
            }
        }
        let total: f64 = self.no_emoji_weight + self.emojis.iter().map(|e| e.curve.ceiling).sum::<f64>();
        if total <= 0.0 && self.post_count > 0 {
            v.push("no_emoji_weight/curves: all weights are zero".into());
        }
        for (new, donor) in &self.surrogates {
            if !seen.contains_key(new.as_str()) {
                v.push(format!("surrogates: {new:?} has no emoji profile"));
            }
            match seen.get(donor.as_str()) {
                None => v.push(format!("surrogates: donor {donor:?} has no emoji profile")),
                Some(&i) if self.emojis[i].context.is_empty() => {
                    v.push(format!("surrogates: donor {donor:?} has an empty context"))
                }
                _ => {}
            }
        }
        if let Some(s) = &self.sentiment {
            if s.positive.is_empty() || s.positive.iter().any(|w| !w.valence.is_finite() || w.valence <= 0.0) {
                v.push("sentiment.positive: needs words with positive finite valence".into());
            }
            if s.negative.is_empty() || s.negative.iter().any(|w| !w.valence.is_finite() || w.valence >= 0.0) {
                v.push("sentiment.negative: needs words with negative finite valence".into());
            }
            if !(0.0..1.0).contains(&s.neutral_share) {
                v.push("sentiment.neutral_share: must be in [0, 1)".into());
            }
            check_rate("sentiment.signal", s.signal, &mut v);
        }
        for (i, ev) in self.events.iter().enumerate() {
            if !seen.contains_key(ev.emoji.as_str()) {
                v.push(format!("events[{i}].emoji: {:?} has no emoji profile", ev.emoji));
            }
            if ev.bucket >= self.buckets {
                v.push(format!("events[{i}].bucket: beyond the last bucket"));
            }
            check_rate(&format!("events[{i}].rate"), ev.rate, &mut v);
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SynthError { violations: v })
        }
    }

    pub fn first_bucket(&self) -> TimeBucket {
        TimeBucket::of(self.start, self.granularity)
    }
}

struct Sampler<'a> {
    words: Vec<&'a str>,
    index: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(dist: &'a [WeightedWord]) -> Sampler<'a> {
        Sampler {
            words: dist.iter().map(|w| w.word.as_str()).collect(),
            index: WeightedIndex::new(dist.iter().map(|w| w.weight)).expect("validated weights"),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> &'a str {
        self.words[self.index.sample(rng)]
    }
}

/// Probability of a positive label (among non-neutral posts) that makes the
/// expected compound score equal `target`.
fn positive_share(plan: &SentimentPlan, target: f64) -> f64 {
    let mean = |ws: &[ValencedWord]| ws.iter().map(|w| normalize_compound(w.valence)).sum::<f64>() / ws.len() as f64;
    let (pos, neg) = (mean(&plan.positive), mean(&plan.negative));
    let s = plan.signal;
    let if_pos = s * pos + (1.0 - s) * neg;
    let if_neg = s * neg + (1.0 - s) * pos;
    if (if_pos - if_neg).abs() < 1e-12 {
        return 0.5;
    }
    ((target / (1.0 - plan.neutral_share) - if_neg) / (if_pos - if_neg)).clamp(0.0, 1.0)
}

/// Generates the corpus for `spec`. Same spec and lexicon, same output.
pub fn generate(spec: &SynthSpec, lexicon: &Lexicon) -> Result<SynthCorpus, SynthError> {
    spec.validate(lexicon)?;
    let mut out = SynthCorpus::default();
    if spec.post_count == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = Sampler::new(&spec.vocabulary);
    let by_emoji: HashMap<&str, usize> = spec.emojis.iter().enumerate().map(|(i, e)| (e.emoji.as_str(), i)).collect();
    // index of the profile whose context each emoji uses
    let context_of: Vec<usize> = spec
        .emojis
        .iter()
        .enumerate()
        .map(|(i, e)| spec.surrogates.get(&e.emoji).map_or(i, |d| by_emoji[d.as_str()]))
        .collect();
    let contexts: Vec<Option<Sampler>> =
        spec.emojis.iter().map(|e| (!e.context.is_empty()).then(|| Sampler::new(&e.context))).collect();
    let hashtags: Vec<Option<Sampler>> =
        spec.emojis.iter().map(|e| (!e.hashtags.is_empty()).then(|| Sampler::new(&e.hashtags))).collect();

    let first = spec.first_bucket();
    let mut bucket_bounds = Vec::with_capacity(spec.buckets as usize);
    let mut emoji_choice = Vec::with_capacity(spec.buckets as usize);
    let mut b = first;
    for i in 0..spec.buckets {
        bucket_bounds.push((b.start(), (b.end() - b.start()).num_seconds()));
        let weights: Vec<f64> =
            std::iter::once(spec.no_emoji_weight).chain(spec.emojis.iter().map(|e| e.curve.at(i as f64))).collect();
        emoji_choice.push(WeightedIndex::new(weights).ok());
        b = b.next();
    }

    for j in 0..spec.post_count {
        let bucket = ((j as u128 * spec.buckets as u128) / spec.post_count as u128) as u32;
        let (start, secs) = bucket_bounds[bucket as usize];
        let created_at = start + Duration::seconds(rng.gen_range(0..secs));
        let chosen = match &emoji_choice[bucket as usize] {
            Some(idx) => idx.sample(&mut rng).checked_sub(1),
            None => None,
        };
        let profile = chosen.map(|i| &spec.emojis[i]);
        let ctx = chosen.map(|i| context_of[i]);

        let n = rng.gen_range(spec.words_per_post[0]..=spec.words_per_post[1]);
        let mut words: Vec<String> = Vec::with_capacity(n + 4);
        for _ in 0..n {
            let from_ctx = match ctx {
                Some(c) if rng.gen_bool(spec.context_share) => contexts[c].as_ref(),
                _ => None,
            };
            words.push(from_ctx.unwrap_or(&background).draw(&mut rng).to_string());
        }

        let mut event = false;
        if let Some(p) = profile {
            for ev in spec.events.iter().filter(|ev| ev.bucket == bucket && ev.emoji == p.emoji) {
                for w in &ev.words {
                    if rng.gen_bool(ev.rate) {
                        words.push(w.clone());
                        event = true;
                    }
                }
            }
        }

        let valence_plan = chosen.and_then(|i| spec.emojis[i].valence.or(spec.emojis[context_of[i]].valence));
        let valence = valence_plan.map_or(0.0, |d| d.at(bucket));
        let mut label = None;
        if let Some(plan) = &spec.sentiment {
            let polarity = if rng.gen_bool(plan.neutral_share) {
                Polarity::Neutral
            } else if rng.gen_bool(positive_share(plan, valence)) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            let agree = rng.gen_bool(plan.signal);
            let list = match (polarity, agree) {
                (Polarity::Neutral, _) => None,
                (Polarity::Positive, true) | (Polarity::Negative, false) => Some(&plan.positive),
                _ => Some(&plan.negative),
            };
            if let Some(list) = list {
                words.push(list.choose(&mut rng).expect("non-empty").word.clone());
            }
            label = Some(polarity);
        }
        words.shuffle(&mut rng);

        let mut parts: Vec<String> = Vec::with_capacity(words.len() + 3);
        if let Some(i) = chosen {
            if let Some(tags) = &hashtags[i] {
                if rng.gen_bool(spec.emojis[i].hashtag_rate) {
                    parts.push(format!("#{}", tags.draw(&mut rng)));
                }
            }
        }
        parts.extend(words);
        if let Some(p) = profile {
            parts.push(p.emoji.clone());
            if rng.gen_bool(spec.repeat_rate) {
                parts.push(p.emoji.clone());
            }
        }

        let id = format!("s{}-{:07}", spec.seed, j);
        out.ledger.push(LedgerEntry {
            id: id.clone(),
            bucket,
            emoji: profile.map(|p| p.emoji.clone()),
            context_from: ctx.map(|c| spec.emojis[c].emoji.clone()),
            label,
            valence,
            event,
        });
        out.posts.push(Post { id, created_at, text: parts.join(" "), lang: None });
    }
    Ok(out)
}
