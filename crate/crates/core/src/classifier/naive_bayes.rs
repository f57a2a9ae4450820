use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, LabeledDataset, Prediction};

pub const MODEL_FORMAT: &str = "emodiff-multinomial-nb";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Additive (Laplace) smoothing.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { alpha: 1.0, seed: 0 }
    }
}

/// On-disk form. Raw counts are stored so the model can be inspected and
/// rescored without retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub label_space: Vec<String>,
    pub class_docs: Vec<u64>,
    pub class_tokens: Vec<u64>,
    /// token → count per class (label-space order)
    pub counts: BTreeMap<String, Vec<u64>>,
}

/// Multinomial naive Bayes over token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    file: ModelFile,
    log_prior: Vec<f64>,
    log_likelihood: HashMap<String, Vec<f64>>,
}

impl NaiveBayes {
    pub fn train(data: &LabeledDataset, config: TrainConfig) -> Result<NaiveBayes, ClassifierError> {
        data.validate()?;
        if !(config.alpha > 0.0 && config.alpha.is_finite()) {
            return Err(ClassifierError::Config(format!("alpha must be positive, got {}", config.alpha)));
        }
        let k = data.label_space.len();
        let mut class_docs = vec![0u64; k];
        let mut class_tokens = vec![0u64; k];
        let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for it in &data.items {
            let c = data.label_index(&it.label).expect("validated");
            class_docs[c] += 1;
            for t in &it.tokens {
                counts.entry(t.clone()).or_insert_with(|| vec![0; k])[c] += 1;
                class_tokens[c] += 1;
            }
        }
        if counts.is_empty() {
            return Err(ClassifierError::EmptyVocabulary);
        }
        NaiveBayes::from_file(ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config,
            label_space: data.label_space.clone(),
            class_docs,
            class_tokens,
            counts,
        })
    }

    pub fn from_file(file: ModelFile) -> Result<NaiveBayes, ClassifierError> {
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ClassifierError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let k = file.label_space.len();
        if k == 0 || file.class_docs.len() != k || file.class_tokens.len() != k {
            return Err(ClassifierError::Format("class arrays do not match the label space".into()));
        }
        if let Some((t, _)) = file.counts.iter().find(|(_, c)| c.len() != k) {
            return Err(ClassifierError::Format(format!("counts for {t:?} do not match the label space")));
        }
        if file.counts.is_empty() {
            return Err(ClassifierError::EmptyVocabulary);
        }
        let alpha = file.config.alpha;
        let vocab = file.counts.len() as f64;
        let docs: u64 = file.class_docs.iter().sum();
        // classes without training documents get a tiny prior instead of -inf
        let log_prior = file
            .class_docs
            .iter()
            .map(|&d| if d == 0 { f64::MIN_POSITIVE.ln() } else { (d as f64 / docs as f64).ln() })
            .collect();
        let denom: Vec<f64> = file.class_tokens.iter().map(|&t| (t as f64 + alpha * vocab).ln()).collect();
        let log_likelihood = file
            .counts
            .iter()
            .map(|(t, c)| (t.clone(), c.iter().zip(&denom).map(|(&n, d)| (n as f64 + alpha).ln() - d).collect()))
            .collect();
        Ok(NaiveBayes { file, log_prior, log_likelihood })
    }

    pub fn file(&self) -> &ModelFile {
        &self.file
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.file).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<NaiveBayes, ClassifierError> {
        NaiveBayes::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NaiveBayes, ClassifierError> {
        NaiveBayes::from_json(&std::fs::read_to_string(path)?)
    }

    /// `ln p(token | class)` for every class, or `None` for unseen tokens.
    pub fn log_likelihood(&self, token: &str) -> Option<&[f64]> {
        self.log_likelihood.get(token).map(Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.file.counts.len()
    }
}

impl Classifier for NaiveBayes {
    fn label_space(&self) -> &[String] {
        &self.file.label_space
    }

    /// Scores are log posteriors normalized with log-sum-exp. Unseen tokens
    /// are ignored.
    fn predict(&self, tokens: &[String]) -> Prediction {
        let mut scores = self.log_prior.clone();
        for t in tokens {
            if let Some(ll) = self.log_likelihood.get(t) {
                for (s, l) in scores.iter_mut().zip(ll) {
                    *s += l;
                }
            }
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        for s in &mut scores {
            *s -= lse;
        }
        Prediction::from_scores(scores)
    }

    /// `max(0, ln p(t|k̂) − mean_k ln p(t|k))` per token, normalized to sum
    /// to 1; uniform when every token scores zero.
    fn salience(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let predicted = self.predict(tokens).label;
        let raw: Vec<f64> = tokens
            .iter()
            .map(|t| match self.log_likelihood.get(t) {
                Some(ll) => {
                    let mean = ll.iter().sum::<f64>() / ll.len() as f64;
                    (ll[predicted] - mean).max(0.0)
                }
                None => 0.0,
            })
            .collect();
        Some(normalize_salience(raw))
    }
}

pub fn normalize_salience(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if raw.is_empty() {
        return raw;
    }
    if total > 0.0 {
        raw.into_iter().map(|r| r / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}
