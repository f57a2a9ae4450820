use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, TokenKind};
use crate::lexicon::{EmojiId, EmojiStatus, Lexicon, VersionCutoff};

pub const NO_EMOJI_LABEL: &str = "no-emoji";
pub const OLD_EMOJI_LABEL: &str = "old-emoji";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    EmojiPrediction,
    OldEmoji,
    Sentiment,
    Targets,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::EmojiPrediction => "emoji-prediction",
            Provenance::OldEmoji => "old-emoji",
            Provenance::Sentiment => "sentiment",
            Provenance::Targets => "targets",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub label_space: Vec<String>,
    pub provenance: Provenance,
    pub items: Vec<LabeledItem>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("no posts for classes: {}", .0.join(", "))]
    EmptyClasses(Vec<String>),
    #[error("item {id:?} has label {label:?} outside the label space")]
    UnknownLabel { id: String, label: String },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("labels repeat in the label space: {0:?}")]
    DuplicateLabel(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_space.iter().position(|l| l == label)
    }

    /// Item counts in label-space order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for it in &self.items {
            *counts.entry(it.label.as_str()).or_default() += 1;
        }
        self.label_space.iter().map(|l| (l.clone(), counts.get(l.as_str()).copied().unwrap_or(0))).collect()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut labels = HashSet::new();
        for l in &self.label_space {
            if !labels.insert(l.as_str()) {
                return Err(DatasetError::DuplicateLabel(l.clone()));
            }
        }
        let mut ids = HashSet::new();
        for it in &self.items {
            if !labels.contains(it.label.as_str()) {
                return Err(DatasetError::UnknownLabel { id: it.id.clone(), label: it.label.clone() });
            }
            if !ids.insert(it.id.as_str()) {
                return Err(DatasetError::DuplicateId(it.id.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&LabeledItem> {
        self.items.iter().find(|it| it.id == id)
    }

    fn with_items(&self, items: Vec<LabeledItem>) -> LabeledDataset {
        LabeledDataset { label_space: self.label_space.clone(), provenance: self.provenance, items }
    }

    /// Seeded shuffle then an 8:1:1 train/validation/test cut.
    pub fn split(&self, seed: u64) -> Split {
        self.split_ratio(seed, [8, 1, 1])
    }

    pub fn split_ratio(&self, seed: u64, ratio: [usize; 3]) -> Split {
        let mut items = self.items.clone();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let total: usize = ratio.iter().sum();
        let n = items.len();
        let n_train = n * ratio[0] / total;
        let n_val = n * ratio[1] / total;
        let test = items.split_off(n_train + n_val);
        let val = items.split_off(n_train);
        Split { train: self.with_items(items), validation: self.with_items(val), test: self.with_items(test) }
    }

    /// Writes items as JSON Lines (one `LabeledItem` per line).
    pub fn write_jsonl(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for it in &self.items {
            serde_json::to_writer(&mut w, it)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads `write_jsonl` output, skipping blank and `#` lines. Without an
    /// explicit label space, labels are taken in order of first appearance.
    pub fn read_jsonl(
        r: impl std::io::BufRead,
        label_space: Option<Vec<String>>,
        provenance: Provenance,
    ) -> Result<LabeledDataset, DatasetError> {
        let mut items = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let parse = |message: String| DatasetError::Parse { line: i + 1, message };
            let line = line.map_err(|e| parse(e.to_string()))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            items.push(serde_json::from_str::<LabeledItem>(&line).map_err(|e| parse(e.to_string()))?);
        }
        let label_space = label_space.unwrap_or_else(|| {
            let mut seen = Vec::<String>::new();
            for it in &items {
                if !seen.contains(&it.label) {
                    seen.push(it.label.clone());
                }
            }
            seen
        });
        let data = LabeledDataset { label_space, provenance, items };
        data.validate()?;
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelDef {
    Emoji(EmojiId),
    /// Any pre-cutoff emoji.
    AnyOld,
    /// Posts without any emoji.
    NoEmoji,
}

impl LabelDef {
    pub fn name(&self, lexicon: &Lexicon) -> String {
        match self {
            LabelDef::Emoji(id) => lexicon.render(lexicon.base(*id)),
            LabelDef::AnyOld => OLD_EMOJI_LABEL.to_string(),
            LabelDef::NoEmoji => NO_EMOJI_LABEL.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmojiDatasetSpec {
    pub labels: Vec<LabelDef>,
    pub cutoff: VersionCutoff,
    pub cap_per_class: Option<usize>,
    pub seed: u64,
    pub provenance: Provenance,
}

/// Builds an emoji-label dataset.
///
/// Explicit emoji labels win over `AnyOld`. A post matching several labels
/// goes to whichever has the fewest items so far (first in label order on
/// ties). Posts containing a post-cutoff emoji that is not itself a label
/// are skipped. Label-defining emojis are removed from the tokens. Classes
/// above the cap are downsampled with the seed, keeping corpus order.
pub fn build_emoji_dataset(
    corpus: &Corpus,
    spec: &EmojiDatasetSpec,
    lexicon: &Lexicon,
) -> Result<LabeledDataset, DatasetError> {
    let label_space: Vec<String> = spec.labels.iter().map(|l| l.name(lexicon)).collect();
    let explicit: Vec<(usize, EmojiId)> = spec
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            LabelDef::Emoji(id) => Some((i, lexicon.base(*id))),
            _ => None,
        })
        .collect();
    let any_old = spec.labels.iter().position(|l| *l == LabelDef::AnyOld);
    let no_emoji = spec.labels.iter().position(|l| *l == LabelDef::NoEmoji);
    let explicit_ids: HashSet<EmojiId> = explicit.iter().map(|e| e.1).collect();
    let is_old = |e: EmojiId| lexicon.classify(e, spec.cutoff) == EmojiStatus::Old;

    let mut per_class: Vec<Vec<LabeledItem>> = vec![Vec::new(); label_space.len()];
    for p in corpus.iter() {
        let emojis: HashSet<EmojiId> = p.emojis(lexicon).collect();
        if emojis.iter().any(|&e| !is_old(e) && !explicit_ids.contains(&e)) {
            continue;
        }
        let mut candidates: Vec<usize> = explicit.iter().filter(|(_, e)| emojis.contains(e)).map(|e| e.0).collect();
        if candidates.is_empty() {
            if let Some(i) = any_old.filter(|_| emojis.iter().any(|&e| is_old(e))) {
                candidates.push(i);
            } else if let Some(i) = no_emoji.filter(|_| emojis.is_empty()) {
                candidates.push(i);
            }
        }
        let Some(&label) = candidates.iter().min_by_key(|&&i| (per_class[i].len(), i)) else { continue };
        let tokens = p
            .tokens
            .iter()
            .filter(|t| {
                t.kind != TokenKind::Emoji
                    || t.emoji.is_none_or(|id| {
                        let b = lexicon.base(id);
                        !explicit_ids.contains(&b) && !(any_old.is_some() && is_old(b))
                    })
            })
            .map(|t| t.feature(lexicon).into_owned())
            .collect();
        per_class[label].push(LabeledItem { id: p.id().to_string(), tokens, label: label_space[label].clone() });
    }

    let empty: Vec<String> =
        per_class.iter().zip(&label_space).filter(|(c, _)| c.is_empty()).map(|(_, l)| l.clone()).collect();
    if !empty.is_empty() {
        return Err(DatasetError::EmptyClasses(empty));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut keep: HashSet<String> = HashSet::new();
    for class in &per_class {
        let mut idx: Vec<usize> = (0..class.len()).collect();
        if let Some(cap) = spec.cap_per_class {
            if class.len() > cap {
                idx.shuffle(&mut rng);
                idx.truncate(cap);
            }
        }
        keep.extend(idx.into_iter().map(|i| class[i].id.clone()));
    }
    let mut items: Vec<LabeledItem> = per_class.into_iter().flatten().filter(|it| keep.contains(&it.id)).collect();
    let order: std::collections::HashMap<&str, usize> = corpus.iter().enumerate().map(|(i, p)| (p.id(), i)).collect();
    items.sort_by_key(|it| order[it.id.as_str()]);
    Ok(LabeledDataset { label_space, provenance: spec.provenance, items })
}
