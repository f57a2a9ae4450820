//! Labeled datasets, the classifier contract, the built-in naive Bayes
//! model and prediction-file interchange for external models.

mod dataset;
mod naive_bayes;
mod predictions;

use thiserror::Error;

pub use dataset::{
    build_emoji_dataset, DatasetError, EmojiDatasetSpec, LabelDef, LabeledDataset, LabeledItem, Provenance, Split,
    NO_EMOJI_LABEL, OLD_EMOJI_LABEL,
};
pub use naive_bayes::{normalize_salience, ModelFile, NaiveBayes, TrainConfig, MODEL_FORMAT, MODEL_VERSION};
pub use predictions::{predict_dataset, PredictionError, PredictionFile, PredictionRow, ReadOptions, RowError};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data has no tokens")]
    EmptyVocabulary,
    #[error("invalid dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unsupported model file: {0}")]
    Format(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Index into the label space.
    pub label: usize,
    /// One finite score per label; `label` is the first maximum.
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Prediction {
        let mut label = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[label] {
                label = i;
            }
        }
        Prediction { label, scores }
    }
}

pub trait Classifier: Sync {
    fn label_space(&self) -> &[String];

    fn predict(&self, tokens: &[String]) -> Prediction;

    /// Per-token non-negative scores summing to 1, if supported.
    fn salience(&self, _tokens: &[String]) -> Option<Vec<f64>> {
        None
    }

    fn predict_label(&self, tokens: &[String]) -> &str {
        &self.label_space()[self.predict(tokens).label]
    }
}
