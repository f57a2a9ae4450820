//! LLM annotation: similar words for an emoji and two-pass sentiment
//! labels, with every response kept in an append-only store that can be
//! replayed offline.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::TokenizedPost;
use crate::sentiment::Polarity;

pub const API_KEY_ENV: &str = "EMODIFF_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const SENTIMENT_TEMPERATURE: f64 = 0.7;
pub const WORDS_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("offline: no stored response for {kind} {payload:?} (pass {pass})")]
    NotInStore { kind: AnnotationKind, payload: String, pass: u8 },
    #[error("{0} is not set")]
    MissingKey(&'static str),
    #[error("request failed: {0}")]
    Http(String),
    #[error("unexpected response shape: {0}")]
    Shape(String),
    #[error("cannot parse response {raw:?}: {reason}")]
    Parse { raw: String, reason: String },
    #[error("store {path}:{line}: {msg}")]
    Store { path: String, line: usize, msg: String },
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationKind {
    SimilarWords,
    SentimentLabel,
}

impl AnnotationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationKind::SimilarWords => "similar-words",
            AnnotationKind::SentimentLabel => "sentiment-label",
        }
    }
}

impl std::fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub kind: AnnotationKind,
    pub payload: String,
    pub temperature: f64,
    pub pass: u8,
}

impl AnnotationRequest {
    pub fn similar_words(emoji: &str, attempt: u8) -> Self {
        AnnotationRequest {
            kind: AnnotationKind::SimilarWords,
            payload: emoji.to_string(),
            temperature: WORDS_TEMPERATURE,
            pass: attempt,
        }
    }

    pub fn sentiment(text: &str, pass: u8) -> Self {
        AnnotationRequest {
            kind: AnnotationKind::SentimentLabel,
            payload: text.to_string(),
            temperature: SENTIMENT_TEMPERATURE,
            pass,
        }
    }

    pub fn digest(&self) -> String {
        request_digest(self.kind, &self.payload, self.pass)
    }

    pub fn prompt(&self) -> String {
        match self.kind {
            AnnotationKind::SimilarWords => similar_words_prompt(&self.payload),
            AnnotationKind::SentimentLabel => sentiment_prompt(&self.payload),
        }
    }
}

pub fn request_digest(kind: AnnotationKind, payload: &str, pass: u8) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update([0x1f]);
    h.update(payload.as_bytes());
    h.update([0x1f]);
    h.update(pass.to_string().as_bytes());
    hex::encode(h.finalize())
}

pub fn similar_words_prompt(emoji: &str) -> String {
    format!("Show me five common single words on Twitter with similar semantics to this emoji: {emoji}")
}

pub fn sentiment_prompt(text: &str) -> String {
    format!(
        "Choose the sentiment of this tweet from {{positive, neutral, negative}}. \
         Reply with the label only.\n\nTweet: {text}"
    )
}

/// Exactly five lowercased single words from a list-like response.
pub fn parse_similar_words(raw: &str) -> Result<Vec<String>, AnnotateError> {
    let fail = |reason: String| AnnotateError::Parse { raw: raw.to_string(), reason };
    let mut words = Vec::new();
    for item in raw.split(['\n', ',', ';']) {
        let item = item.trim().trim_start_matches(|c: char| c.is_ascii_digit() || ".)-*• ".contains(c));
        let item = item.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if item.is_empty() {
            continue;
        }
        if item.split_whitespace().count() > 1 {
            return Err(fail(format!("{item:?} is not a single word")));
        }
        words.push(item);
    }
    if words.len() != 5 {
        return Err(fail(format!("expected 5 words, got {}", words.len())));
    }
    Ok(words)
}

pub fn parse_sentiment(raw: &str) -> Result<Polarity, AnnotateError> {
    let found: Vec<Polarity> =
        raw.split(|c: char| !c.is_alphabetic()).filter_map(|w| Polarity::from_str(w).ok()).collect();
    match found.first() {
        Some(&p) if found.iter().all(|&q| q == p) => Ok(p),
        Some(_) => Err(AnnotateError::Parse { raw: raw.to_string(), reason: "several labels".into() }),
        None => Err(AnnotateError::Parse { raw: raw.to_string(), reason: "no valid label".into() }),
    }
}

/// Text in, text out.
pub trait Completion: Sync {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, AnnotateError>;
}

/// Chat-completions style HTTP backend.
pub struct HttpCompletion {
    pub endpoint: String,
    pub model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpCompletion {
    pub fn new(endpoint: &str, model: &str, api_key: String, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().new_agent();
        HttpCompletion { endpoint: endpoint.to_string(), model: model.to_string(), api_key, agent }
    }

    pub fn from_env(endpoint: &str, model: &str) -> Result<Self, AnnotateError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| AnnotateError::MissingKey(API_KEY_ENV))?;
        Ok(Self::new(endpoint, model, key, Duration::from_secs(60)))
    }
}

impl Completion for HttpCompletion {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, AnnotateError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value: serde_json::Value = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| AnnotateError::Http(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| AnnotateError::Http(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AnnotateError::Shape(value.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub digest: String,
    pub kind: AnnotationKind,
    pub payload: String,
    pub pass: u8,
    pub response: String,
}

/// Append-only JSON Lines store keyed by request digest.
pub struct AnnotationStore {
    path: Option<PathBuf>,
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    records: HashMap<String, StoreRecord>,
    file: Option<File>,
}

impl AnnotationStore {
    pub fn in_memory() -> Self {
        AnnotationStore { path: None, inner: Mutex::new(StoreInner { records: HashMap::new(), file: None }) }
    }

    /// Loads `path` if present; new records are appended to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        let path = path.as_ref().to_path_buf();
        let mut records = HashMap::new();
        if path.exists() {
            let shown = path.display().to_string();
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let err = |msg: String| AnnotateError::Store { path: shown.clone(), line: i + 1, msg };
                let r: StoreRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                if r.digest != request_digest(r.kind, &r.payload, r.pass) {
                    return Err(err("digest does not match request".into()));
                }
                records.insert(r.digest.clone(), r);
            }
        }
        Ok(AnnotationStore { path: Some(path), inner: Mutex::new(StoreInner { records, file: None }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, req: &AnnotationRequest) -> Option<String> {
        self.inner.lock().unwrap().records.get(&req.digest()).map(|r| r.response.clone())
    }

    pub fn insert(&self, req: &AnnotationRequest, response: &str) -> Result<(), AnnotateError> {
        let record = StoreRecord {
            digest: req.digest(),
            kind: req.kind,
            payload: req.payload.clone(),
            pass: req.pass,
            response: response.to_string(),
        };
        let mut inner = self.inner.lock().unwrap();
        if let Some(path) = &self.path {
            if inner.file.is_none() {
                inner.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            let f = inner.file.as_mut().unwrap();
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
        }
        inner.records.insert(record.digest.clone(), record);
        Ok(())
    }

    /// Records sorted by digest.
    pub fn records(&self) -> Vec<StoreRecord> {
        let mut v: Vec<StoreRecord> = self.inner.lock().unwrap().records.values().cloned().collect();
        v.sort_by(|a, b| a.digest.cmp(&b.digest));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Agreed(Polarity),
    Disagreement,
}

/// Store-first annotator. Without a backend it is offline: anything not
/// already stored is an error and nothing touches the network.
pub struct Annotator<'a> {
    store: &'a AnnotationStore,
    backend: Option<&'a dyn Completion>,
    calls: AtomicUsize,
    pub concurrency: usize,
}

impl<'a> Annotator<'a> {
    pub fn offline(store: &'a AnnotationStore) -> Self {
        Annotator { store, backend: None, calls: AtomicUsize::new(0), concurrency: 1 }
    }

    pub fn online(store: &'a AnnotationStore, backend: &'a dyn Completion, concurrency: usize) -> Self {
        Annotator { store, backend: Some(backend), calls: AtomicUsize::new(0), concurrency: concurrency.max(1) }
    }

    pub fn is_offline(&self) -> bool {
        self.backend.is_none()
    }

    /// Backend calls made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn request(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        if let Some(r) = self.store.get(req) {
            return Ok(r);
        }
        let Some(backend) = self.backend else {
            return Err(AnnotateError::NotInStore { kind: req.kind, payload: req.payload.clone(), pass: req.pass });
        };
        self.calls.fetch_add(1, Ordering::SeqCst);
        let response = backend.complete(&req.prompt(), req.temperature)?;
        self.store.insert(req, &response)?;
        Ok(response)
    }

    /// Five similar words; a malformed first answer is asked again once.
    pub fn similar_words(&self, emoji: &str) -> Result<Vec<String>, AnnotateError> {
        let first = self.request(&AnnotationRequest::similar_words(emoji, 1))?;
        match parse_similar_words(&first) {
            Ok(w) => Ok(w),
            Err(_) => parse_similar_words(&self.request(&AnnotationRequest::similar_words(emoji, 2))?),
        }
    }

    pub fn sentiment_passes(&self, text: &str) -> Result<[Polarity; 2], AnnotateError> {
        let a = parse_sentiment(&self.request(&AnnotationRequest::sentiment(text, 1))?)?;
        let b = parse_sentiment(&self.request(&AnnotationRequest::sentiment(text, 2))?)?;
        Ok([a, b])
    }

    pub fn label_sentiment(&self, text: &str) -> Result<SentimentLabel, AnnotateError> {
        let [a, b] = self.sentiment_passes(text)?;
        Ok(if a == b { SentimentLabel::Agreed(a) } else { SentimentLabel::Disagreement })
    }

    /// Both passes for each text, in input order, using up to
    /// `concurrency` threads.
    pub fn sentiment_batch(&self, texts: &[&str]) -> Vec<Result<[Polarity; 2], AnnotateError>> {
        let workers = self.concurrency.min(texts.len()).max(1);
        if workers == 1 {
            return texts.iter().map(|t| self.sentiment_passes(t)).collect();
        }
        let chunk = texts.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = texts
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(|t| self.sentiment_passes(t)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("annotation worker panicked")).collect()
        })
    }

    /// Both passes for each post, keyed by post id. Posts missing from an
    /// offline store are left out; any other failure stops the batch.
    pub fn annotate_posts(&self, posts: &[&TokenizedPost]) -> Result<HashMap<String, [Polarity; 2]>, AnnotateError> {
        let texts: Vec<&str> = posts.iter().map(|p| p.post.text.as_str()).collect();
        let mut out = HashMap::new();
        for (p, r) in posts.iter().zip(self.sentiment_batch(&texts)) {
            match r {
                Ok(passes) => {
                    out.insert(p.id().to_string(), passes);
                }
                Err(AnnotateError::NotInStore { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted(Mutex<Vec<&'static str>>);
    impl Completion for Scripted {
        fn complete(&self, _: &str, _: f64) -> Result<String, AnnotateError> {
            Ok(self.0.lock().unwrap().remove(0).to_string())
        }
    }

    #[test]
    fn prompt_text() {
        assert_eq!(
            similar_words_prompt("🪙"),
            "Show me five common single words on Twitter with similar semantics to this emoji: 🪙"
        );
    }

    #[test]
    fn parses_word_lists() {
        let want = ["money", "currency", "cash", "change", "gold"];
        assert_eq!(parse_similar_words("money, currency, cash, change, gold").unwrap(), want);
        assert_eq!(parse_similar_words("1. Money\n2. Currency\n3. Cash\n4. Change\n5. Gold.").unwrap(), want);
        assert!(parse_similar_words("money, currency, cash, change").is_err());
        assert!(parse_similar_words("money, currency, cash, change, pot of gold").is_err());
    }

    #[test]
    fn parses_labels() {
        assert_eq!(parse_sentiment("Negative.").unwrap(), Polarity::Negative);
        assert_eq!(parse_sentiment("Sentiment: neutral").unwrap(), Polarity::Neutral);
        assert!(parse_sentiment("happy").is_err());
        assert!(parse_sentiment("positive or negative").is_err());
    }

    #[test]
    fn retry_once_then_surface_raw() {
        let store = AnnotationStore::in_memory();
        let backend = Scripted(Mutex::new(vec!["a, b, c, d", "money, currency, cash, change, gold"]));
        let a = Annotator::online(&store, &backend, 1);
        assert_eq!(a.similar_words("🪙").unwrap().len(), 5);
        assert_eq!(a.calls(), 2);

        let backend = Scripted(Mutex::new(vec!["one", "two"]));
        let a = Annotator::online(&store, &backend, 1);
        match a.similar_words("🫐") {
            Err(AnnotateError::Parse { raw, .. }) => assert_eq!(raw, "two"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn agreement() {
        let store = AnnotationStore::in_memory();
        let backend = Scripted(Mutex::new(vec!["negative", "negative", "neutral", "positive"]));
        let a = Annotator::online(&store, &backend, 1);
        assert_eq!(a.label_sentiment("x").unwrap(), SentimentLabel::Agreed(Polarity::Negative));
        assert_eq!(a.label_sentiment("y").unwrap(), SentimentLabel::Disagreement);
    }

    #[test]
    fn replay_is_offline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        {
            let store = AnnotationStore::open(&path).unwrap();
            let backend = Scripted(Mutex::new(vec!["money, currency, cash, change, gold"]));
            Annotator::online(&store, &backend, 1).similar_words("🪙").unwrap();
        }
        let store = AnnotationStore::open(&path).unwrap();
        let a = Annotator::offline(&store);
        assert_eq!(a.similar_words("🪙").unwrap()[4], "gold");
        assert_eq!(a.calls(), 0);
        assert!(matches!(a.similar_words("🥲"), Err(AnnotateError::NotInStore { .. })));
    }

    #[test]
    fn tampered_store_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(&path, r#"{"digest":"00","kind":"similar-words","payload":"x","pass":1,"response":"y"}"#)
            .unwrap();
        assert!(matches!(AnnotationStore::open(&path), Err(AnnotateError::Store { line: 1, .. })));
    }

    #[test]
    fn batch_order_with_threads() {
        let store = AnnotationStore::in_memory();
        let labels = ["positive", "neutral", "negative"];
        let texts: Vec<String> = (0..30).map(|i| format!("t{i}")).collect();
        for (i, t) in texts.iter().enumerate() {
            store.insert(&AnnotationRequest::sentiment(t, 1), labels[i % 3]).unwrap();
            store.insert(&AnnotationRequest::sentiment(t, 2), labels[(i / 2) % 3]).unwrap();
        }
        let mut a = Annotator::offline(&store);
        a.concurrency = 4;
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let out = a.sentiment_batch(&refs);
        for (i, r) in out.into_iter().enumerate() {
            let [x, y] = r.unwrap();
            assert_eq!(x.as_str(), labels[i % 3]);
            assert_eq!(y.as_str(), labels[(i / 2) % 3]);
        }
    }
}
