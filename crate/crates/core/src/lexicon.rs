//! Emoji inventory with release-version metadata and longest-match
//! extraction of emoji sequences from text.
//!
//! The lexicon is loaded from a TSV file
//! (`codepoints<TAB>name<TAB>version`, `#` comments). Lookups fold the
//! variation selector U+FE0F, and skin-tone modifiers that are not listed
//! explicitly are absorbed into the preceding match, so `🤌🏽` counts as `🤌`
//! while its span still covers the modifier.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ZWJ: char = '\u{200D}';
pub const VS16: char = '\u{FE0F}';

const BUNDLED_TSV: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate codepoint sequence (first defined on line {first})")]
    Duplicate { line: usize, first: usize },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

/// Emoji release version such as `11.0` or `13.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmojiVersion {
    pub major: u16,
    pub minor: u16,
}

impl EmojiVersion {
    pub const fn new(major: u16, minor: u16) -> Self {
        EmojiVersion { major, minor }
    }
}

impl fmt::Display for EmojiVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

impl FromStr for EmojiVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (major, minor) = s.split_once('.').unwrap_or((s, "0"));
        let major = major.parse().map_err(|_| format!("bad emoji version {s:?}"))?;
        let minor = minor.parse().map_err(|_| format!("bad emoji version {s:?}"))?;
        Ok(EmojiVersion { major, minor })
    }
}

impl Serialize for EmojiVersion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmojiVersion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Index of an entry in its [`Lexicon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EmojiId(pub u32);

impl EmojiId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmojiEntry {
    pub id: EmojiId,
    pub codepoints: Vec<char>,
    pub name: String,
    pub version: EmojiVersion,
    /// Entry with VS-16 and skin-tone modifiers stripped; `id` for base entries.
    pub base: EmojiId,
}

impl EmojiEntry {
    pub fn render(&self) -> String {
        self.codepoints.iter().collect()
    }

    pub fn is_base(&self) -> bool {
        self.base == self.id
    }

    /// Hex notation as used in the TSV, e.g. `1F469 200D 1F4BB`.
    pub fn hex(&self) -> String {
        self.codepoints.iter().map(|c| format!("{:X}", *c as u32)).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmojiStatus {
    Old,
    New,
}

/// Splits the inventory into old and new emojis: new iff `version > cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionCutoff(pub EmojiVersion);

impl VersionCutoff {
    pub fn classify(&self, entry: &EmojiEntry) -> EmojiStatus {
        if entry.version > self.0 {
            EmojiStatus::New
        } else {
            EmojiStatus::Old
        }
    }

    pub fn is_new(&self, entry: &EmojiEntry) -> bool {
        self.classify(entry) == EmojiStatus::New
    }
}

impl FromStr for VersionCutoff {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(VersionCutoff)
    }
}

/// One extracted emoji occurrence. `span` is a byte range into the source
/// text and includes any absorbed modifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiMatch {
    pub id: EmojiId,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub matches: Vec<EmojiMatch>,
    /// Emoji-looking scalars that matched no entry.
    pub unknown_scalars: usize,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<char, u32>,
    entry: Option<EmojiId>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<EmojiEntry>,
    by_key: HashMap<Vec<char>, EmojiId>,
    trie: Vec<TrieNode>,
}

pub fn is_skin_tone(c: char) -> bool {
    ('\u{1F3FB}'..='\u{1F3FF}').contains(&c)
}

/// Scalars allowed inside a lexicon entry.
pub fn is_emoji_relevant(c: char) -> bool {
    matches!(c as u32,
        0x00A9 | 0x00AE | 0x200D | 0x20E3 | 0xFE0F
        | 0x203C..=0x3299
        | 0x1F000..=0x1FAFF
        | 0xE0020..=0xE007F)
}

/// Narrower test used for the unknown-emoji diagnostic tally: pictographic
/// blocks only, so CJK punctuation and arrows are not reported.
pub fn looks_like_emoji(c: char) -> bool {
    matches!(c as u32, 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x1F000..=0x1FAFF)
}

fn fold_key(codepoints: &[char]) -> Vec<char> {
    codepoints.iter().copied().filter(|&c| c != VS16).collect()
}

fn strip_modifiers(codepoints: &[char]) -> Vec<char> {
    codepoints.iter().copied().filter(|&c| c != VS16 && !is_skin_tone(c)).collect()
}

fn parse_codepoints(field: &str, line: usize) -> Result<Vec<char>, LexiconError> {
    let mut out = Vec::new();
    for hex in field.split_whitespace() {
        let hex = hex.trim_start_matches("U+").trim_start_matches("u+");
        let value = u32::from_str_radix(hex, 16)
            .map_err(|_| LexiconError::Parse { line, msg: format!("malformed scalar {hex:?}") })?;
        let c = char::from_u32(value)
            .ok_or_else(|| LexiconError::Parse { line, msg: format!("U+{value:X} is not a Unicode scalar value") })?;
        if !is_emoji_relevant(c) {
            return Err(LexiconError::Schema { line, msg: format!("U+{value:X} is outside the emoji ranges") });
        }
        out.push(c);
    }
    if out.is_empty() {
        return Err(LexiconError::Schema { line, msg: "empty codepoint sequence".into() });
    }
    Ok(out)
}

impl Lexicon {
    /// The inventory shipped with the crate.
    pub fn bundled() -> Lexicon {
        Lexicon::from_tsv(BUNDLED_TSV).expect("bundled lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
        let text = fs::read_to_string(path)?;
        Lexicon::from_tsv(&text)
    }

    pub fn from_tsv(text: &str) -> Result<Lexicon, LexiconError> {
        let mut rows: Vec<(Vec<char>, String, EmojiVersion)> = Vec::new();
        let mut seen: HashMap<Vec<char>, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(LexiconError::Schema {
                    line,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let codepoints = parse_codepoints(fields[0], line)?;
            let name = fields[1].trim().to_string();
            if name.is_empty() {
                return Err(LexiconError::Schema { line, msg: "empty name".into() });
            }
            let version = fields[2].parse::<EmojiVersion>().map_err(|msg| LexiconError::Parse { line, msg })?;
            // Sequences that differ only by VS-16 are indistinguishable once folded.
            let key = fold_key(&codepoints);
            if let Some(&first) = seen.get(&key) {
                return Err(LexiconError::Duplicate { line, first });
            }
            seen.insert(key, line);
            rows.push((codepoints, name, version));
        }
        Ok(Lexicon::from_rows(rows))
    }

    fn from_rows(rows: Vec<(Vec<char>, String, EmojiVersion)>) -> Lexicon {
        let mut by_key = HashMap::with_capacity(rows.len());
        let mut entries = Vec::with_capacity(rows.len());
        for (i, (codepoints, name, version)) in rows.into_iter().enumerate() {
            let id = EmojiId(i as u32);
            by_key.insert(fold_key(&codepoints), id);
            entries.push(EmojiEntry { id, codepoints, name, version, base: id });
        }
        for entry in entries.iter_mut() {
            let stripped = strip_modifiers(&entry.codepoints);
            if let Some(&base) = by_key.get(&stripped) {
                entry.base = base;
            }
        }
        let mut trie = vec![TrieNode::default()];
        for entry in &entries {
            let mut node = 0usize;
            for c in fold_key(&entry.codepoints) {
                let next = trie.len() as u32;
                let child = *trie[node].children.entry(c).or_insert(next);
                if child == next {
                    trie.push(TrieNode::default());
                }
                node = child as usize;
            }
            trie[node].entry = Some(entry.id);
        }
        Lexicon { entries, by_key, trie }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: EmojiId) -> &EmojiEntry {
        &self.entries[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmojiEntry> {
        self.entries.iter()
    }

    pub fn base(&self, id: EmojiId) -> EmojiId {
        self.entries[id.index()].base
    }

    pub fn render(&self, id: EmojiId) -> String {
        self.get(id).render()
    }

    /// Exact lookup of a single emoji given as text (VS-16 insensitive).
    pub fn lookup(&self, emoji: &str) -> Option<EmojiId> {
        let chars: Vec<char> = emoji.trim().chars().collect();
        self.by_key.get(&fold_key(&chars)).copied()
    }

    pub fn find_by_name(&self, name: &str) -> Option<EmojiId> {
        let name = name.trim();
        self.entries.iter().find(|e| e.name.eq_ignore_ascii_case(name)).map(|e| e.id)
    }

    /// Resolves a user-supplied emoji reference: the emoji itself, its
    /// name, or its hex codepoints (`1F97A`, `U+1F97A`).
    pub fn resolve(&self, spec: &str) -> Option<EmojiId> {
        if let Some(id) = self.lookup(spec) {
            return Some(id);
        }
        if let Some(id) = self.find_by_name(spec) {
            return Some(id);
        }
        let chars: Option<Vec<char>> = spec
            .split_whitespace()
            .map(|h| {
                let h = h.trim_start_matches("U+").trim_start_matches("u+");
                u32::from_str_radix(h, 16).ok().and_then(char::from_u32)
            })
            .collect();
        chars.and_then(|c| self.by_key.get(&fold_key(&c)).copied())
    }

    pub fn classify(&self, id: EmojiId, cutoff: VersionCutoff) -> EmojiStatus {
        cutoff.classify(self.get(id))
    }

    /// Longest match starting exactly at byte `start`; returns the entry and
    /// the end of the span after absorbing trailing modifiers.
    fn longest_match(&self, text: &str, start: usize) -> Option<(EmojiId, usize)> {
        let mut node = 0usize;
        let mut best: Option<(EmojiId, usize)> = None;
        let mut consumed = false;
        for (off, c) in text[start..].char_indices() {
            let end = start + off + c.len_utf8();
            if c == VS16 && consumed {
                continue;
            }
            if let Some(&child) = self.trie[node].children.get(&c) {
                node = child as usize;
                consumed = true;
                if let Some(id) = self.trie[node].entry {
                    best = Some((id, end));
                }
            } else if consumed && is_skin_tone(c) {
                continue;
            } else {
                break;
            }
        }
        best.map(|(id, end)| {
            let extra: usize =
                text[end..].chars().take_while(|&c| c == VS16 || is_skin_tone(c)).map(char::len_utf8).sum();
            (id, end + extra)
        })
    }

    /// Greedy longest-match segmentation of `text` into lexicon entries.
    pub fn extract(&self, text: &str) -> Extraction {
        let mut out = Extraction::default();
        let mut i = 0;
        while i < text.len() {
            if let Some((id, end)) = self.longest_match(text, i) {
                out.matches.push(EmojiMatch { id, span: i..end });
                i = end;
                continue;
            }
            let c = text[i..].chars().next().expect("in bounds");
            if looks_like_emoji(c) {
                out.unknown_scalars += 1;
            }
            i += c.len_utf8();
        }
        out
    }

    pub fn extract_emojis(&self, text: &str) -> Vec<EmojiMatch> {
        self.extract(text).matches
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        Lexicon::bundled()
    }

    #[test]
    fn parses_single_row() {
        let l = Lexicon::from_tsv("1F97A\tpleading face\t11.0\n").unwrap();
        assert_eq!(l.len(), 1);
        let e = l.get(EmojiId(0));
        assert_eq!(e.codepoints, vec!['\u{1F97A}']);
        assert_eq!(e.name, "pleading face");
        assert_eq!(e.version, EmojiVersion::new(11, 0));
        assert!(e.is_base());
    }

    #[test]
    fn empty_file_is_empty_lexicon() {
        assert!(Lexicon::from_tsv("").unwrap().is_empty());
        assert!(Lexicon::from_tsv("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_names_second_line() {
        let err = Lexicon::from_tsv("# c\n1F97A\ta\t11.0\n1F97A\tb\t11.0\n").unwrap_err();
        match err {
            LexiconError::Duplicate { line, first } => {
                assert_eq!(line, 3);
                assert_eq!(first, 2);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_scalar_is_parse_error() {
        let err = Lexicon::from_tsv("1F9ZZ\tbad\t11.0\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 1, .. }));
        let err = Lexicon::from_tsv("0041\tletter a\t11.0\n").unwrap_err();
        assert!(matches!(err, LexiconError::Schema { line: 1, .. }));
    }

    #[test]
    fn bundled_base_invariants() {
        let l = lex();
        for e in l.iter() {
            let base = l.get(e.base);
            assert!(base.is_base(), "{} base not a base", e.name);
            let stripped = strip_modifiers(&e.codepoints);
            if l.by_key.contains_key(&stripped) {
                assert_eq!(fold_key(&base.codepoints), stripped);
            }
        }
        let variant = l.lookup("🤌🏽").unwrap();
        assert_eq!(l.get(l.base(variant)).name, "pinched fingers");
    }

    #[test]
    fn classify_against_cutoff() {
        let l = lex();
        let c12: VersionCutoff = "12.0".parse().unwrap();
        let c13: VersionCutoff = "13.0".parse().unwrap();
        let pleading = l.find_by_name("pleading face").unwrap();
        let ninja = l.find_by_name("ninja").unwrap();
        let tear = l.find_by_name("smiling face with tear").unwrap();
        assert_eq!(l.classify(pleading, c12), EmojiStatus::Old);
        assert_eq!(l.classify(ninja, c12), EmojiStatus::New);
        assert_eq!(l.classify(tear, c13), EmojiStatus::Old);
    }

    #[test]
    fn extracts_single_emoji() {
        let l = lex();
        let text = "happy 🥳!!";
        let m = l.extract_emojis(text);
        assert_eq!(m.len(), 1);
        assert_eq!(l.get(m[0].id).name, "partying face");
        assert_eq!(&text[m[0].span.clone()], "🥳");
        assert!(l.extract_emojis("no emoji here").is_empty());
    }

    #[test]
    fn zwj_sequence_is_one_entry() {
        let l = lex();
        let text = "coding \u{1F469}\u{200D}\u{1F4BB} all day";
        let m = l.extract_emojis(text);
        assert_eq!(m.len(), 1);
        assert_eq!(l.get(m[0].id).name, "woman technologist");
    }

    #[test]
    fn unknown_zwj_sequence_falls_back_to_components() {
        let l = lex();
        // woman + ZWJ + rocket is not in the lexicon
        let m = l.extract_emojis("\u{1F469}\u{200D}\u{1F680}");
        let names: Vec<_> = m.iter().map(|m| l.get(m.id).name.as_str()).collect();
        assert_eq!(names, ["woman", "rocket"]);
    }

    #[test]
    fn skin_tone_folds_but_span_keeps_variant() {
        let l = lex();
        let text = "yes 👍🏽 ok";
        let m = l.extract_emojis(text);
        assert_eq!(m.len(), 1);
        assert_eq!(l.get(m[0].id).name, "thumbs up");
        assert_eq!(&text[m[0].span.clone()], "👍🏽");
        // explicitly listed variant is returned as itself
        let m = l.extract_emojis("👍🏻");
        assert_eq!(l.get(m[0].id).name, "thumbs up: light skin tone");
        assert_eq!(l.get(l.base(m[0].id)).name, "thumbs up");
    }

    #[test]
    fn vs16_is_optional() {
        let l = lex();
        for text in ["❤", "❤️"] {
            let m = l.extract_emojis(text);
            assert_eq!(m.len(), 1);
            assert_eq!(l.get(m[0].id).name, "red heart");
            assert_eq!(m[0].span, 0..text.len());
        }
        let m = l.extract_emojis("❤️‍🔥");
        assert_eq!(l.get(m[0].id).name, "heart on fire");
    }

    #[test]
    fn unknown_pictographs_are_tallied() {
        let l = lex();
        let ex = l.extract("coffee ☕ and 🥳");
        assert_eq!(ex.matches.len(), 1);
        assert_eq!(ex.unknown_scalars, 1);
    }

    #[test]
    fn round_trip_every_entry() {
        let l = lex();
        for e in l.iter() {
            let text = e.render();
            let m = l.extract_emojis(&text);
            assert_eq!(m.len(), 1, "{}", e.name);
            assert_eq!(m[0].id, e.id, "{}", e.name);
            assert_eq!(m[0].span, 0..text.len());
        }
    }

    /// Brute force: at each position try every entry and take the longest
    /// exact codepoint match.
    fn brute_force(l: &Lexicon, text: &str) -> Vec<(EmojiId, Range<usize>)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < text.len() {
            let best = l
                .iter()
                .filter_map(|e| {
                    let r = e.render();
                    text[i..].starts_with(&r).then_some((e.id, r.len()))
                })
                .max_by_key(|&(_, len)| len);
            match best {
                Some((id, len)) => {
                    out.push((id, i..i + len));
                    i += len;
                }
                None => i += text[i..].chars().next().unwrap().len_utf8(),
            }
        }
        out
    }

    proptest! {
        #[test]
        fn trie_matches_brute_force(picks in prop::collection::vec((0usize..400, 0usize..4), 0..12)) {
            let l = lex();
            let fillers = [" ", "ab ", "x", ", "];
            let mut text = String::new();
            for (p, f) in picks {
                text.push_str(fillers[f]);
                if p < l.len() {
                    text.push_str(&l.get(EmojiId(p as u32)).render());
                }
            }
            let got: Vec<_> = l.extract_emojis(&text).into_iter().map(|m| (m.id, m.span)).collect();
            prop_assert_eq!(got, brute_force(&l, &text));
        }

        #[test]
        fn spans_are_disjoint_and_increasing(s in "\\PC{0,40}") {
            let l = lex();
            let m = l.extract_emojis(&s);
            for w in m.windows(2) {
                prop_assert!(w[0].span.end <= w[1].span.start);
            }
            for x in &m {
                prop_assert!(x.span.start < x.span.end);
            }
        }

        #[test]
        fn concatenation_safety(a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>(), s1 in "[a-z ]{0,5}", s2 in "[a-z ]{0,5}") {
            let l = lex();
            let left = format!("x{}{}y", s1, l.render(EmojiId(a.index(l.len()) as u32)));
            let right = format!("z{}{}w", l.render(EmojiId(b.index(l.len()) as u32)), s2);
            let whole: Vec<_> = l.extract_emojis(&format!("{left}{right}")).into_iter().map(|m| m.id).collect();
            let mut parts: Vec<_> = l.extract_emojis(&left).into_iter().map(|m| m.id).collect();
            parts.extend(l.extract_emojis(&right).into_iter().map(|m| m.id));
            prop_assert_eq!(whole, parts);
        }
    }
}
