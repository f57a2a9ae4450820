use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::lexicon::{EmojiId, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Emoji,
    Hashtag,
}

/// A word, emoji or hashtag. Emoji tokens keep the raw text (including
/// skin-tone or VS-16 variants) as `surface` and carry the matched entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emoji: Option<EmojiId>,
}

impl Token {
    pub fn word(surface: impl Into<String>) -> Token {
        Token { kind: TokenKind::Word, surface: surface.into(), emoji: None }
    }

    pub fn hashtag(surface: impl Into<String>) -> Token {
        Token { kind: TokenKind::Hashtag, surface: surface.into(), emoji: None }
    }

    pub fn emoji(surface: impl Into<String>, id: EmojiId) -> Token {
        Token { kind: TokenKind::Emoji, surface: surface.into(), emoji: Some(id) }
    }

    /// Emoji token for a lexicon entry rendered canonically.
    pub fn for_entry(lexicon: &Lexicon, id: EmojiId) -> Token {
        Token::emoji(lexicon.render(id), id)
    }

    pub fn is_emoji(&self) -> bool {
        self.kind == TokenKind::Emoji
    }

    /// The string a classifier sees: words as-is, hashtags with `#`, emojis
    /// folded to their base entry.
    pub fn feature<'a>(&'a self, lexicon: &Lexicon) -> Cow<'a, str> {
        match self.kind {
            TokenKind::Word => Cow::Borrowed(&self.surface),
            TokenKind::Hashtag => Cow::Owned(format!("#{}", self.surface)),
            TokenKind::Emoji => match self.emoji {
                Some(id) => Cow::Owned(lexicon.render(lexicon.base(id))),
                None => Cow::Borrowed(&self.surface),
            },
        }
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_dropped_chunk(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    chunk.starts_with('@') || lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Splits a run of non-emoji text into word tokens. Apostrophes are kept
/// only between alphanumerics so contractions stay whole.
fn push_words(chunk: &str, out: &mut Vec<Token>) {
    let lower = chunk.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.push(c);
        } else if is_apostrophe(c) && !word.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
            word.push('\'');
        } else if !word.is_empty() {
            out.push(Token::word(std::mem::take(&mut word)));
        }
    }
    if !word.is_empty() {
        out.push(Token::word(word));
    }
}

fn push_chunk(mut chunk: &str, out: &mut Vec<Token>) {
    while !chunk.is_empty() {
        if is_dropped_chunk(chunk) {
            return;
        }
        if let Some(rest) = chunk.strip_prefix('#') {
            let len: usize = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').map(char::len_utf8).sum();
            if len > 0 {
                out.push(Token::hashtag(rest[..len].to_lowercase()));
            }
            chunk = &rest[len..];
            continue;
        }
        // words up to the next '#', which may start another hashtag
        let skip = chunk.chars().next().map_or(0, char::len_utf8);
        let end = chunk[skip..].find('#').map_or(chunk.len(), |p| p + skip);
        push_words(&chunk[..end], out);
        chunk = &chunk[end..];
    }
}

fn push_plain(segment: &str, out: &mut Vec<Token>) {
    for chunk in segment.split_whitespace() {
        push_chunk(chunk, out);
    }
}

/// Splits text into emoji, hashtag and word tokens in text order. URLs and
/// @-mentions are dropped.
pub fn tokenize(text: &str, lexicon: &Lexicon) -> Vec<Token> {
    tokenize_with_stats(text, lexicon).0
}

/// Like [`tokenize`], also returning the count of unknown emoji scalars.
pub fn tokenize_with_stats(text: &str, lexicon: &Lexicon) -> (Vec<Token>, usize) {
    let extraction = lexicon.extract(text);
    let mut out = Vec::new();
    let mut pos = 0;
    for m in &extraction.matches {
        push_plain(&text[pos..m.span.start], &mut out);
        out.push(Token::emoji(&text[m.span.clone()], m.id));
        pos = m.span.end;
    }
    push_plain(&text[pos..], &mut out);
    (out, extraction.unknown_scalars)
}

/// Renders tokens back to text separated by single spaces.
pub fn render_tokens(tokens: &[Token]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        if t.kind == TokenKind::Hashtag {
            s.push('#');
        }
        s.push_str(&t.surface);
    }
    s
}
