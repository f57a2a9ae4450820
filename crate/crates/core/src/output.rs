//! Output files: every artifact starts with a header naming the tool
//! version, the config digest and the seed.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "emodiff";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputHeader {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub seed: u64,
}

impl OutputHeader {
    pub fn new(config_digest: impl Into<String>, seed: u64) -> Self {
        OutputHeader { tool: TOOL.into(), version: VERSION.into(), config: config_digest.into(), seed }
    }

    /// Header for a command run without a config file: the digest covers
    /// the given arguments instead.
    pub fn for_args<T: Serialize>(args: &T, seed: u64) -> Self {
        Self::new(digest_json(args), seed)
    }

    /// The text of the `#` comment line (without the `# `).
    pub fn comment(&self) -> String {
        format!("{} {} config={} seed={}", self.tool, self.version, self.config, self.seed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Digest of the compact JSON form of `value`.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes"))
}

#[derive(Serialize)]
struct WithHeader<'a, T: Serialize> {
    header: &'a OutputHeader,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a leading `"header"` field. `body` must serialize as
/// a map.
pub fn json_with_header<T: Serialize>(header: &OutputHeader, body: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(&WithHeader { header, body }).expect("body serializes");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, header: &OutputHeader, body: &T) -> io::Result<()> {
    fs::write(path, json_with_header(header, body))
}

/// CSV with a `# ` header comment line.
pub fn csv_with_header<I, R>(header: &OutputHeader, columns: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut buf = Vec::new();
    writeln!(buf, "# {}", header.comment()).expect("vec write");
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(columns).expect("vec write");
    for r in rows {
        w.write_record(r).expect("vec write");
    }
    w.into_inner().expect("vec write")
}

/// Drops leading `#` comment lines so a header-stamped CSV can be parsed.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}
