//! Replacing new emojis with their old-emoji surrogates (or their name
//! words) and measuring what that does to a sentiment classifier.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, LabeledDataset, LabeledItem, Provenance};
use crate::corpus::{tokenize, TokenizedPost};
use crate::lexicon::{EmojiStatus, Lexicon, VersionCutoff};
use crate::sentiment::Polarity;

#[derive(Debug, Error, PartialEq)]
pub enum SubstituteError {
    #[error("no {mode} mapping for new emoji {emoji}")]
    Unmapped { emoji: String, mode: Mode },
    #[error("surrogate {surrogate} for {emoji} is not an old emoji")]
    NewSurrogate { emoji: String, surrogate: String },
    #[error("{0} is not a new emoji under the cutoff")]
    NotNew(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Surrogates,
    NameWords,
    None,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Surrogates => "surrogates",
            Mode::NameWords => "name-words",
            Mode::None => "none",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surrogates" => Ok(Mode::Surrogates),
            "name-words" | "name" => Ok(Mode::NameWords),
            "none" => Ok(Mode::None),
            _ => Err(format!("unknown policy {s:?} (surrogates, name-words, none)")),
        }
    }
}

/// Mappings for every new emoji plus the set used to recognise them in
/// feature token streams.
#[derive(Debug, Clone)]
pub struct SubstitutionPolicy {
    pub surrogates: BTreeMap<String, Vec<String>>,
    pub names: BTreeMap<String, Vec<String>>,
    /// Unmapped new emojis pass through instead of failing.
    pub lenient: bool,
    new_emojis: HashSet<String>,
}

impl SubstitutionPolicy {
    pub fn new(
        lexicon: &Lexicon,
        cutoff: VersionCutoff,
        surrogates: BTreeMap<String, Vec<String>>,
    ) -> Result<SubstitutionPolicy, SubstituteError> {
        let mut names = BTreeMap::new();
        let mut new_emojis = HashSet::new();
        for e in lexicon.iter().filter(|e| e.is_base() && cutoff.is_new(e)) {
            let words = tokenize(&e.name, lexicon).into_iter().map(|t| t.surface.to_lowercase()).collect();
            names.insert(e.render(), words);
            new_emojis.insert(e.render());
        }
        for (emoji, triple) in &surrogates {
            if !new_emojis.contains(emoji) {
                return Err(SubstituteError::NotNew(emoji.clone()));
            }
            for s in triple {
                let old = lexicon.lookup(s).is_some_and(|id| lexicon.classify(id, cutoff) == EmojiStatus::Old);
                if !old {
                    return Err(SubstituteError::NewSurrogate { emoji: emoji.clone(), surrogate: s.clone() });
                }
            }
        }
        Ok(SubstitutionPolicy { surrogates, names, lenient: false, new_emojis })
    }

    pub fn lenient(mut self, lenient: bool) -> Self {
        self.lenient = lenient;
        self
    }

    pub fn is_new(&self, token: &str) -> bool {
        self.new_emojis.contains(token)
    }

    pub fn contains_new(&self, tokens: &[String]) -> bool {
        tokens.iter().any(|t| self.is_new(t))
    }

    pub fn substitute(&self, tokens: &[String], mode: Mode) -> Result<Vec<String>, SubstituteError> {
        let map = match mode {
            Mode::None => return Ok(tokens.to_vec()),
            Mode::Surrogates => &self.surrogates,
            Mode::NameWords => &self.names,
        };
        let mut out = Vec::with_capacity(tokens.len() + 2);
        for t in tokens {
            if !self.is_new(t) {
                out.push(t.clone());
                continue;
            }
            match map.get(t) {
                Some(r) => out.extend(r.iter().cloned()),
                None if self.lenient => out.push(t.clone()),
                None => return Err(SubstituteError::Unmapped { emoji: t.clone(), mode }),
            }
        }
        Ok(out)
    }

    /// Drops items containing any new emoji, e.g. to train a model that
    /// has never seen one.
    pub fn without_new(&self, data: &LabeledDataset) -> LabeledDataset {
        LabeledDataset {
            label_space: data.label_space.clone(),
            provenance: data.provenance,
            items: data.items.iter().filter(|it| !self.contains_new(&it.tokens)).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTally {
    pub kept: usize,
    pub disagreed: usize,
    pub missing: usize,
}

/// Labels each post with its annotation if both passes agree.
pub fn build_sentiment_dataset<'a>(
    posts: impl IntoIterator<Item = &'a TokenizedPost>,
    annotations: &HashMap<String, [Polarity; 2]>,
    lexicon: &Lexicon,
) -> (LabeledDataset, AgreementTally) {
    let mut tally = AgreementTally::default();
    let mut items = Vec::new();
    for p in posts {
        match annotations.get(p.id()) {
            None => tally.missing += 1,
            Some([a, b]) if a != b => tally.disagreed += 1,
            Some([a, _]) => {
                tally.kept += 1;
                items.push(LabeledItem {
                    id: p.id().to_string(),
                    tokens: p.tokens.iter().map(|t| t.feature(lexicon).into_owned()).collect(),
                    label: a.to_string(),
                });
            }
        }
    }
    let label_space = Polarity::ALL.iter().map(|p| p.to_string()).collect();
    (LabeledDataset { label_space, provenance: Provenance::Sentiment, items }, tally)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub emoji: String,
    pub surrogates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub n_test: usize,
    pub ori_acc: f64,
    pub replaced_acc: f64,
    pub word_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub group: String,
    pub emojis: Vec<String>,
    pub n_test: usize,
    pub ori_acc: f64,
    pub replaced_acc: f64,
    pub word_acc: f64,
    /// (replaced − ori) / ori
    pub replaced_improvement: Option<f64>,
    pub word_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub groups: Vec<GroupAggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

pub const REPORT_COLUMNS: [&str; 6] = ["emoji", "surrogates", "n_test", "ori_acc", "replaced_acc", "word_acc"];

impl EvalReport {
    pub fn row(&self, emoji: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.emoji == emoji)
    }

    pub fn group(&self, group: &str) -> Option<&GroupAggregate> {
        self.groups.iter().find(|g| g.group == group)
    }

    /// Per-emoji rows, then one `[group]` row per aggregate. Surrogates are
    /// space-separated.
    pub fn write_csv(&self, w: impl Write, comment: Option<&str>) -> csv::Result<()> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.emoji.clone(),
                r.surrogates.join(" "),
                r.n_test.to_string(),
                r.ori_acc.to_string(),
                r.replaced_acc.to_string(),
                r.word_acc.to_string(),
            ])?;
        }
        for g in &self.groups {
            out.write_record([
                format!("[{}]", g.group),
                String::new(),
                g.n_test.to_string(),
                g.ori_acc.to_string(),
                g.replaced_acc.to_string(),
                g.word_acc.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sentimental vs entity partition of the eight emojis studied originally.
pub fn default_groups() -> BTreeMap<String, String> {
    let mut g = BTreeMap::new();
    for e in ["🥲", "🥸", "🫂", "🤌"] {
        g.insert(e.to_string(), "sentimental".to_string());
    }
    for e in ["🪜", "🥷", "🪙", "🫐"] {
        g.insert(e.to_string(), "entity".to_string());
    }
    g
}

fn pooled(group: &str, rows: &[&EvalRow]) -> GroupAggregate {
    let n: usize = rows.iter().map(|r| r.n_test).sum();
    let acc = |f: fn(&EvalRow) -> f64| rows.iter().map(|r| f(r) * r.n_test as f64).sum::<f64>() / n as f64;
    let (ori, rep, word) = (acc(|r| r.ori_acc), acc(|r| r.replaced_acc), acc(|r| r.word_acc));
    let rel = |x: f64| (ori > 0.0).then(|| (x - ori) / ori);
    GroupAggregate {
        group: group.to_string(),
        emojis: rows.iter().map(|r| r.emoji.clone()).collect(),
        n_test: n,
        ori_acc: ori,
        replaced_acc: rep,
        word_acc: word,
        replaced_improvement: rel(rep),
        word_improvement: rel(word),
    }
}

/// Accuracy of `model` on the test items containing each target, with the
/// post's new emojis left in place, swapped for surrogates, or swapped for
/// name words. A post counts toward every target it contains.
pub fn evaluate(
    model: &dyn Classifier,
    test: &LabeledDataset,
    targets: &[String],
    policy: &SubstitutionPolicy,
    groups: &BTreeMap<String, String>,
) -> Result<EvalReport, SubstituteError> {
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let correct = |it: &LabeledItem, mode: Mode| -> Result<bool, SubstituteError> {
        Ok(model.predict_label(&policy.substitute(&it.tokens, mode)?) == it.label)
    };
    for target in targets {
        let items: Vec<&LabeledItem> = test.items.iter().filter(|it| it.tokens.contains(target)).collect();
        if items.is_empty() {
            diagnostics.push(format!("{target}: no test posts"));
            continue;
        }
        let mut hits = [0usize; 3];
        for it in &items {
            for (h, mode) in hits.iter_mut().zip([Mode::None, Mode::Surrogates, Mode::NameWords]) {
                *h += correct(it, mode)? as usize;
            }
        }
        let n = items.len();
        rows.push(EvalRow {
            emoji: target.clone(),
            surrogates: policy.surrogates.get(target).cloned().unwrap_or_default(),
            group: groups.get(target).cloned(),
            n_test: n,
            ori_acc: hits[0] as f64 / n as f64,
            replaced_acc: hits[1] as f64 / n as f64,
            word_acc: hits[2] as f64 / n as f64,
        });
    }
    let mut by_group: BTreeMap<&str, Vec<&EvalRow>> = BTreeMap::new();
    for r in &rows {
        if let Some(g) = &r.group {
            by_group.entry(g).or_default().push(r);
        }
    }
    let groups = by_group.iter().map(|(g, rs)| pooled(g, rs)).collect();
    Ok(EvalReport { rows, groups, diagnostics })
}
