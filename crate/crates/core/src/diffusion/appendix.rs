//! Per-version reference counts: early-stage hashtag popularity and word
//! counts against late-stage emoji counts, one CSV per emoji version.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppendixError {
    #[error("cannot read {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: no rows")]
    Empty { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixRow {
    pub emoji: String,
    /// `|`-separated top co-occurring hashtags.
    pub hashtags: String,
    pub hashtag_early: f64,
    pub word_early: f64,
    pub emoji_late: f64,
    /// `|`-separated similar words.
    pub similar_words: String,
}

impl AppendixRow {
    pub fn similar_words(&self) -> Vec<&str> {
        self.similar_words.split('|').filter(|w| !w.is_empty()).collect()
    }
}

pub fn load_appendix(path: impl AsRef<Path>) -> Result<Vec<AppendixRow>, AppendixError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader =
        csv::Reader::from_path(path).map_err(|source| AppendixError::Csv { path: shown.clone(), source })?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<AppendixRow>, _>>()
        .map_err(|source| AppendixError::Csv { path: shown.clone(), source })?;
    if rows.is_empty() {
        return Err(AppendixError::Empty { path: shown });
    }
    Ok(rows)
}
