//! High-salience words per predicted label, and old-emoji surrogates for
//! new emojis ranked by how often an old-emoji model predicts each old
//! label on posts containing the new emoji.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, LabeledDataset, LabeledItem, PredictionFile, Provenance, NO_EMOJI_LABEL};
use crate::corpus::{Corpus, TokenKind};
use crate::lexicon::{EmojiId, EmojiStatus, Lexicon, VersionCutoff};

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("no prediction for {0:?}")]
    MissingPrediction(String),
    #[error("{id:?}: {got} saliences for {want} tokens")]
    SalienceLength { id: String, got: usize, want: usize },
    #[error("{0:?} has no salience vector")]
    MissingSalience(String),
    #[error("label {0:?} is not in the label space")]
    UnknownLabel(String),
    #[error("model label space contains post-cutoff emoji {0}")]
    NewEmojiInModel(String),
}

/// Running sums behind the per-(label, token) mean salience. Mergeable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SalienceAccumulator {
    pub label_space: Vec<String>,
    /// per label: token → (salience sum, occurrences)
    pub sums: Vec<HashMap<String, (f64, u64)>>,
    pub docs: Vec<u64>,
}

impl SalienceAccumulator {
    pub fn new(label_space: Vec<String>) -> SalienceAccumulator {
        let k = label_space.len();
        SalienceAccumulator { label_space, sums: vec![HashMap::new(); k], docs: vec![0; k] }
    }

    pub fn add(&mut self, label: usize, tokens: &[String], salience: &[f64]) {
        assert_eq!(tokens.len(), salience.len(), "one salience per token");
        self.docs[label] += 1;
        for (t, s) in tokens.iter().zip(salience) {
            let e = self.sums[label].entry(t.clone()).or_default();
            e.0 += s;
            e.1 += 1;
        }
    }

    pub fn merge(&mut self, other: SalienceAccumulator) {
        assert_eq!(self.label_space, other.label_space);
        for (k, m) in other.sums.into_iter().enumerate() {
            for (t, (s, n)) in m {
                let e = self.sums[k].entry(t).or_default();
                e.0 += s;
                e.1 += n;
            }
            self.docs[k] += other.docs[k];
        }
    }

    /// Mean salience of `token` within inputs predicted `label`, with its
    /// occurrence count.
    pub fn mean(&self, label: usize, token: &str) -> Option<(f64, u64)> {
        self.sums[label].get(token).map(|&(s, n)| (s / n as f64, n))
    }

    pub fn finish(&self, min_occurrences: u64, top_k: usize) -> SalienceTable {
        let mut labels = Vec::new();
        let mut diagnostics = Vec::new();
        for (k, label) in self.label_space.iter().enumerate() {
            if self.docs[k] == 0 {
                diagnostics.push(format!("no inputs predicted {label}"));
                continue;
            }
            let mut top: Vec<TokenSalience> = self.sums[k]
                .iter()
                .filter(|(_, &(_, n))| n >= min_occurrences)
                .map(|(t, &(sum, n))| TokenSalience { token: t.clone(), mean: sum / n as f64, occurrences: n })
                .collect();
            top.sort_by(|a, b| {
                b.mean.total_cmp(&a.mean).then(b.occurrences.cmp(&a.occurrences)).then_with(|| a.token.cmp(&b.token))
            });
            top.truncate(top_k);
            labels.push(LabelSalience { label: label.clone(), docs: self.docs[k], top });
        }
        SalienceTable { min_occurrences, labels, diagnostics }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSalience {
    pub token: String,
    pub mean: f64,
    pub occurrences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSalience {
    pub label: String,
    pub docs: u64,
    pub top: Vec<TokenSalience>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceTable {
    pub min_occurrences: u64,
    pub labels: Vec<LabelSalience>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl SalienceTable {
    pub fn label(&self, label: &str) -> Option<&LabelSalience> {
        self.labels.iter().find(|l| l.label == label)
    }
}

#[derive(Debug, Clone)]
pub struct SalienceOptions {
    pub min_occurrences: u64,
    pub top_k: usize,
}

impl Default for SalienceOptions {
    fn default() -> Self {
        SalienceOptions { min_occurrences: 10, top_k: 10 }
    }
}

/// Accumulates predicted labels and saliences over `data`.
pub fn salience_accumulator(
    data: &LabeledDataset,
    predictions: &PredictionFile,
) -> Result<SalienceAccumulator, InterpretError> {
    let by_id = predictions.by_id();
    let index: HashMap<&str, usize> =
        predictions.label_space.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut acc = SalienceAccumulator::new(predictions.label_space.clone());
    for it in &data.items {
        let row = by_id.get(it.id.as_str()).ok_or_else(|| InterpretError::MissingPrediction(it.id.clone()))?;
        let label = *index.get(row.label.as_str()).ok_or_else(|| InterpretError::UnknownLabel(row.label.clone()))?;
        let s = row.salience.as_ref().ok_or_else(|| InterpretError::MissingSalience(it.id.clone()))?;
        if s.len() != it.tokens.len() {
            return Err(InterpretError::SalienceLength { id: it.id.clone(), got: s.len(), want: it.tokens.len() });
        }
        acc.add(label, &it.tokens, s);
    }
    Ok(acc)
}

pub fn aggregate_salience(
    data: &LabeledDataset,
    predictions: &PredictionFile,
    opts: &SalienceOptions,
) -> Result<SalienceTable, InterpretError> {
    Ok(salience_accumulator(data, predictions)?.finish(opts.min_occurrences, opts.top_k))
}

/// A post containing one or more target new emojis, with every post-cutoff
/// emoji removed from its tokens.
/// New emojis appearing in at least `min_posts` posts, most used first.
pub fn new_emojis_in(corpus: &Corpus, cutoff: VersionCutoff, min_posts: usize, lexicon: &Lexicon) -> Vec<EmojiId> {
    let mut posts: HashMap<EmojiId, usize> = HashMap::new();
    for p in corpus.iter() {
        let set: HashSet<EmojiId> =
            p.emojis(lexicon).filter(|&e| lexicon.classify(e, cutoff) == EmojiStatus::New).collect();
        for e in set {
            *posts.entry(e).or_default() += 1;
        }
    }
    let mut v: Vec<(EmojiId, usize)> = posts.into_iter().filter(|&(_, n)| n >= min_posts).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|e| e.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetItem {
    pub id: String,
    pub tokens: Vec<String>,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub new_emojis: Vec<String>,
    pub items: Vec<TargetItem>,
}

impl TargetSet {
    /// Posts containing any of `new_emojis`; a post counts for every target
    /// it contains.
    pub fn build(corpus: &Corpus, new_emojis: &[EmojiId], cutoff: VersionCutoff, lexicon: &Lexicon) -> TargetSet {
        let bases: Vec<EmojiId> = new_emojis.iter().map(|&e| lexicon.base(e)).collect();
        let names: Vec<String> = bases.iter().map(|&e| lexicon.render(e)).collect();
        let items = corpus
            .iter()
            .filter_map(|p| {
                let targets: Vec<String> = bases
                    .iter()
                    .zip(&names)
                    .filter(|(&b, _)| p.contains_emoji(b, lexicon))
                    .map(|(_, n)| n.clone())
                    .collect();
                if targets.is_empty() {
                    return None;
                }
                let tokens = p
                    .tokens
                    .iter()
                    .filter(|t| {
                        t.kind != TokenKind::Emoji
                            || t.emoji.is_none_or(|id| lexicon.classify(id, cutoff) == EmojiStatus::Old)
                    })
                    .map(|t| t.feature(lexicon).into_owned())
                    .collect();
                Some(TargetItem { id: p.id().to_string(), tokens, targets })
            })
            .collect();
        TargetSet { new_emojis: names, items }
    }

    /// The inputs as a dataset (labelled with the first target) for
    /// exporting to an external model.
    pub fn to_dataset(&self) -> LabeledDataset {
        LabeledDataset {
            label_space: self.new_emojis.clone(),
            provenance: Provenance::Targets,
            items: self
                .items
                .iter()
                .map(|it| LabeledItem { id: it.id.clone(), tokens: it.tokens.clone(), label: it.targets[0].clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRow {
    pub emoji: String,
    pub score: f64,
    pub count: u64,
    pub surrogate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRanking {
    pub new_emoji: String,
    pub denominator: u64,
    /// Every old label, highest score first.
    pub rows: Vec<SurrogateRow>,
}

impl SurrogateRanking {
    pub fn surrogates(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.surrogate).map(|r| r.emoji.as_str()).collect()
    }

    pub fn score(&self, emoji: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.emoji == emoji).map(|r| r.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub rankings: Vec<SurrogateRanking>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl SurrogateReport {
    pub fn get(&self, new_emoji: &str) -> Option<&SurrogateRanking> {
        self.rankings.iter().find(|r| r.new_emoji == new_emoji)
    }

    /// new emoji → surrogate triple.
    pub fn surrogate_map(&self) -> BTreeMap<String, Vec<String>> {
        self.rankings
            .iter()
            .map(|r| (r.new_emoji.clone(), r.surrogates().into_iter().map(String::from).collect()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateOptions {
    pub top_n: usize,
    /// Labels never marked as surrogates (their scores are still reported).
    /// Labels with no predictions are never surrogates either.
    pub exclude: Vec<String>,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        SurrogateOptions { top_n: 3, exclude: vec![NO_EMOJI_LABEL.to_string()] }
    }
}

/// Scores from (item, predicted old label) pairs: for each new emoji, the
/// share of its posts predicted as each old label.
pub fn rank_from_pairs<'a>(
    label_space: &[String],
    targets: &TargetSet,
    pairs: impl IntoIterator<Item = (&'a TargetItem, usize)>,
    opts: &SurrogateOptions,
) -> SurrogateReport {
    let k = label_space.len();
    let mut counts: HashMap<&str, Vec<u64>> = targets.new_emojis.iter().map(|e| (e.as_str(), vec![0; k])).collect();
    for (item, label) in pairs {
        for t in &item.targets {
            if let Some(c) = counts.get_mut(t.as_str()) {
                c[label] += 1;
            }
        }
    }
    let mut rankings = Vec::new();
    let mut diagnostics = Vec::new();
    for e in &targets.new_emojis {
        let c = &counts[e.as_str()];
        let denominator: u64 = c.iter().sum();
        if denominator == 0 {
            diagnostics.push(format!("{e}: no posts"));
            continue;
        }
        let mut rows: Vec<SurrogateRow> = label_space
            .iter()
            .zip(c)
            .map(|(l, &n)| SurrogateRow {
                emoji: l.clone(),
                score: n as f64 / denominator as f64,
                count: n,
                surrogate: false,
            })
            .collect();
        // stable sort keeps label-space order among ties
        rows.sort_by_key(|r| std::cmp::Reverse(r.count));
        for r in rows.iter_mut().filter(|r| r.count > 0 && !opts.exclude.contains(&r.emoji)).take(opts.top_n) {
            r.surrogate = true;
        }
        rankings.push(SurrogateRanking { new_emoji: e.clone(), denominator, rows });
    }
    SurrogateReport { rankings, diagnostics }
}

fn check_old_labels(labels: &[String], cutoff: Option<VersionCutoff>, lexicon: &Lexicon) -> Result<(), InterpretError> {
    if let Some(cutoff) = cutoff {
        for l in labels {
            if let Some(id) = lexicon.lookup(l) {
                if lexicon.classify(id, cutoff) == EmojiStatus::New {
                    return Err(InterpretError::NewEmojiInModel(l.clone()));
                }
            }
        }
    }
    Ok(())
}

/// Runs the old-emoji model over each target post and ranks old labels.
pub fn surrogate_rank(
    model: &dyn Classifier,
    targets: &TargetSet,
    cutoff: Option<VersionCutoff>,
    lexicon: &Lexicon,
    opts: &SurrogateOptions,
) -> Result<SurrogateReport, InterpretError> {
    check_old_labels(model.label_space(), cutoff, lexicon)?;
    let pairs = targets.items.iter().map(|it| (it, model.predict(&it.tokens).label));
    Ok(rank_from_pairs(model.label_space(), targets, pairs, opts))
}

/// Same ranking from an imported prediction file keyed by post id.
pub fn surrogate_rank_from_predictions(
    predictions: &PredictionFile,
    targets: &TargetSet,
    cutoff: Option<VersionCutoff>,
    lexicon: &Lexicon,
    opts: &SurrogateOptions,
) -> Result<SurrogateReport, InterpretError> {
    check_old_labels(&predictions.label_space, cutoff, lexicon)?;
    let by_id = predictions.by_id();
    let index: HashMap<&str, usize> =
        predictions.label_space.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut pairs = Vec::with_capacity(targets.items.len());
    for it in &targets.items {
        let row = by_id.get(it.id.as_str()).ok_or_else(|| InterpretError::MissingPrediction(it.id.clone()))?;
        let label = *index.get(row.label.as_str()).ok_or_else(|| InterpretError::UnknownLabel(row.label.clone()))?;
        pairs.push((it, label));
    }
    Ok(rank_from_pairs(&predictions.label_space, targets, pairs, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub token: String,
    pub score: f64,
}

/// One row per new emoji: its highest-salience words and its surrogates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationRow {
    pub emoji: String,
    pub words: Vec<ScoredToken>,
    pub surrogates: Vec<ScoredToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_emoji_score: Option<f64>,
    pub posts: u64,
}

pub fn interpretation_rows(salience: &SalienceTable, surrogates: &SurrogateReport) -> Vec<InterpretationRow> {
    surrogates
        .rankings
        .iter()
        .map(|r| InterpretationRow {
            emoji: r.new_emoji.clone(),
            words: salience
                .label(&r.new_emoji)
                .map(|l| l.top.iter().map(|t| ScoredToken { token: t.token.clone(), score: t.mean }).collect())
                .unwrap_or_default(),
            surrogates: r
                .rows
                .iter()
                .filter(|x| x.surrogate)
                .map(|x| ScoredToken { token: x.emoji.clone(), score: x.score })
                .collect(),
            no_emoji_score: r.score(NO_EMOJI_LABEL),
            posts: r.denominator,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{predict_dataset, NaiveBayes, PredictionRow, TrainConfig};
    use crate::corpus::Post;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn item(id: &str, tokens: &[&str], label: &str) -> LabeledItem {
        LabeledItem { id: id.into(), tokens: strs(tokens), label: label.into() }
    }

    #[test]
    fn single_occurrence_mean() {
        let mut acc = SalienceAccumulator::new(strs(&["k"]));
        acc.add(0, &strs(&["t", "u"]), &[0.4, 0.6]);
        assert_eq!(acc.mean(0, "t"), Some((0.4, 1)));
    }

    /// t has saliences {0.2, 0.4} in docs predicted k and 0.9 elsewhere.
    #[test]
    fn three_doc_ratio_of_sums() {
        let data = LabeledDataset {
            label_space: strs(&["k", "j"]),
            provenance: Provenance::EmojiPrediction,
            items: vec![item("1", &["t", "a"], "k"), item("2", &["t", "b"], "k"), item("3", &["t", "c"], "j")],
        };
        let row = |id: &str, label: &str, s: [f64; 2]| PredictionRow {
            id: id.into(),
            label: label.into(),
            salience: Some(s.to_vec()),
        };
        let preds = PredictionFile {
            label_space: strs(&["k", "j"]),
            rows: vec![row("1", "k", [0.2, 0.8]), row("2", "k", [0.4, 0.6]), row("3", "j", [0.9, 0.1])],
        };
        let acc = salience_accumulator(&data, &preds).unwrap();
        let (mean, n) = acc.mean(0, "t").unwrap();
        assert!((mean - 0.3).abs() < 1e-15);
        assert_eq!(n, 2);
        let table = acc.finish(1, 10);
        assert_eq!(table.label("k").unwrap().top[0].token, "a");
        let table = acc.finish(2, 10);
        assert_eq!(table.label("k").unwrap().top.len(), 1);
    }

    #[test]
    fn missing_label_diagnostic() {
        let acc = SalienceAccumulator::new(strs(&["k"]));
        assert_eq!(acc.finish(1, 10).diagnostics, ["no inputs predicted k"]);
    }

    fn targets(n: usize, new: &str) -> TargetSet {
        TargetSet {
            new_emojis: strs(&[new]),
            items: (0..n).map(|i| TargetItem { id: i.to_string(), tokens: vec![], targets: strs(&[new]) }).collect(),
        }
    }

    #[test]
    fn eq_scores_are_shares() {
        let labels = strs(&["😔", "🥺", "😩", NO_EMOJI_LABEL]);
        let t = targets(10, "🥲");
        let all = rank_from_pairs(&labels, &t, t.items.iter().map(|it| (it, 0)), &SurrogateOptions::default());
        assert_eq!(all.rankings[0].rows[0].score, 1.0);
        let mixed: Vec<usize> = vec![1, 1, 1, 0, 0, 0, 0, 3, 3, 2];
        let r = rank_from_pairs(&labels, &t, t.items.iter().zip(mixed), &SurrogateOptions::default());
        let r = &r.rankings[0];
        assert_eq!(r.score("🥺"), Some(0.3));
        assert!((r.rows.iter().map(|x| x.score).sum::<f64>() - 1.0).abs() < 1e-12);
        // no-emoji is second by score but never a surrogate
        assert_eq!(r.surrogates(), ["😔", "🥺", "😩"]);
    }

    /// 1000 predictions: 167 😔, 85 🥺, 61 😩, the rest spread over other labels.
    #[test]
    fn reported_percentages_reproduce() {
        let labels = strs(&["😔", "🥺", "😩", "😂", "❤", "✨", NO_EMOJI_LABEL]);
        let mut preds = Vec::new();
        preds.extend(std::iter::repeat_n(0, 167));
        preds.extend(std::iter::repeat_n(1, 85));
        preds.extend(std::iter::repeat_n(2, 61));
        for i in 0..(1000 - 313) {
            preds.push(3 + i % 4);
        }
        let t = targets(1000, "🥲");
        let opts = SurrogateOptions { exclude: vec![], ..Default::default() };
        let r = rank_from_pairs(&labels, &t, t.items.iter().zip(preds), &opts);
        let r = &r.rankings[0];
        assert_eq!(r.score("😔"), Some(0.167));
        assert_eq!(r.score("🥺"), Some(0.085));
        assert_eq!(r.score("😩"), Some(0.061));
    }

    #[test]
    fn imported_predictions_match_in_process() {
        let l = Lexicon::bundled();
        let texts = ["sad alone 🥲", "party done 🥲 😂", "tired 🥲", "yay 🥲", "meh 🪙"];
        let posts = (0..50).map(|i| Post {
            id: format!("p{i}"),
            created_at: "2022-04-01T00:00:00Z".parse().unwrap(),
            text: texts[i % texts.len()].to_string(),
            lang: None,
        });
        let c = Corpus::from_posts(posts, &l);
        let new = [l.lookup("🥲").unwrap(), l.lookup("🪙").unwrap()];
        let cutoff: VersionCutoff = "12.1".parse().unwrap();
        let t = TargetSet::build(&c, &new, cutoff, &l);
        assert_eq!(t.items.len(), 50);
        assert_eq!(t.items[1].tokens, ["party", "done", "😂"]);
        let train = LabeledDataset {
            label_space: strs(&["😔", "🎉", NO_EMOJI_LABEL]),
            provenance: Provenance::OldEmoji,
            items: vec![
                item("a", &["sad", "alone", "tired"], "😔"),
                item("b", &["party", "done", "yay"], "🎉"),
                item("c", &["meh"], NO_EMOJI_LABEL),
            ],
        };
        let m = NaiveBayes::train(&train, TrainConfig::default()).unwrap();
        let direct = surrogate_rank(&m, &t, Some(cutoff), &l, &SurrogateOptions::default()).unwrap();
        let file = predict_dataset(&m, &t.to_dataset(), false);
        let imported =
            surrogate_rank_from_predictions(&file, &t, Some(cutoff), &l, &SurrogateOptions::default()).unwrap();
        assert_eq!(direct, imported);
        assert_eq!(direct.get("🥲").unwrap().denominator, 40);
    }

    #[test]
    fn rejects_new_emoji_labels() {
        let l = Lexicon::bundled();
        let preds = PredictionFile { label_space: strs(&["😂", "🥲"]), rows: vec![] };
        let err = surrogate_rank_from_predictions(
            &preds,
            &targets(0, "🪙"),
            Some("12.1".parse().unwrap()),
            &l,
            &SurrogateOptions::default(),
        );
        assert_eq!(err.unwrap_err(), InterpretError::NewEmojiInModel("🥲".into()));
    }
}
