//! JSON Lines prediction files: a `{"label_space": [...]}` header line,
//! then one `{"id", "label", "salience"?}` row per input. Lines starting
//! with `#` are comments.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Classifier, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salience: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionFile {
    pub label_space: Vec<String>,
    pub rows: Vec<PredictionRow>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    label_space: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("cannot read predictions: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing label_space header line")]
    MissingHeader,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("{errors} of {rows} rows invalid; first: {first}")]
    TooManyErrors { errors: usize, rows: usize, first: RowError },
}

#[derive(Debug, Clone)]
pub struct ReadOptions {
    /// Fatal when row errors exceed this fraction of rows.
    pub max_error_fraction: f64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { max_error_fraction: 0.10 }
    }
}

impl PredictionFile {
    /// Writes the file; `comment` (if any) becomes a leading `# ...` line.
    pub fn write(&self, mut w: impl Write, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        serde_json::to_writer(&mut w, &Header { label_space: self.label_space.clone() })?;
        w.write_all(b"\n")?;
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads and checks a prediction file. With a dataset, ids must resolve
    /// and salience lengths must match the item's token count. Bad rows are
    /// returned separately unless they exceed the error threshold.
    pub fn read(
        r: impl Read,
        dataset: Option<&LabeledDataset>,
        opts: &ReadOptions,
    ) -> Result<(PredictionFile, Vec<RowError>), PredictionError> {
        let items: Option<HashMap<&str, usize>> =
            dataset.map(|d| d.items.iter().map(|it| (it.id.as_str(), it.tokens.len())).collect());
        let mut lines = BufReader::new(r).lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() || l.starts_with('#') => None,
            other => Some((i + 1, other)),
        });
        let header = match lines.next() {
            None => return Err(PredictionError::MissingHeader),
            Some((_, l)) => l?,
        };
        let header: Header = serde_json::from_str(&header).map_err(|e| PredictionError::BadHeader(e.to_string()))?;
        let labels: HashSet<&str> = header.label_space.iter().map(String::as_str).collect();
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        let mut seen = HashSet::new();
        let mut total = 0;
        for (line, l) in lines {
            let l = l?;
            total += 1;
            let row: PredictionRow = match serde_json::from_str(&l) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(RowError { line, id: None, message: e.to_string() });
                    continue;
                }
            };
            let fail = |message: String| RowError { line, id: Some(row.id.clone()), message };
            if !labels.contains(row.label.as_str()) {
                errors.push(fail(format!("label {:?} outside the label space", row.label)));
                continue;
            }
            if !seen.insert(row.id.clone()) {
                errors.push(fail("duplicate id".into()));
                continue;
            }
            if let Some(items) = &items {
                let Some(&n) = items.get(row.id.as_str()) else {
                    errors.push(fail("unknown id".into()));
                    continue;
                };
                if let Some(s) = &row.salience {
                    if s.len() != n {
                        errors.push(fail(format!("{} saliences for {n} tokens", s.len())));
                        continue;
                    }
                }
            }
            if let Some(s) = &row.salience {
                if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    errors.push(fail("salience must be finite and non-negative".into()));
                    continue;
                }
            }
            rows.push(row);
        }
        if !errors.is_empty() && errors.len() as f64 > opts.max_error_fraction * total as f64 {
            return Err(PredictionError::TooManyErrors { errors: errors.len(), rows: total, first: errors[0].clone() });
        }
        Ok((PredictionFile { label_space: header.label_space, rows }, errors))
    }

    pub fn by_id(&self) -> HashMap<&str, &PredictionRow> {
        self.rows.iter().map(|r| (r.id.as_str(), r)).collect()
    }
}

/// Runs `model` over every item, attaching saliences when requested and
/// supported.
pub fn predict_dataset(model: &dyn Classifier, data: &LabeledDataset, with_salience: bool) -> PredictionFile {
    let rows = data
        .items
        .iter()
        .map(|it| PredictionRow {
            id: it.id.clone(),
            label: model.predict_label(&it.tokens).to_string(),
            salience: if with_salience { model.salience(&it.tokens) } else { None },
        })
        .collect();
    PredictionFile { label_space: model.label_space().to_vec(), rows }
}
