//! Language codes, tokenizers and character-offset helpers shared by retrieval,
//! detection and evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Languages the pipeline knows how to tokenize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Zh,
    De,
    Fr,
    Es,
    Vi,
    Ja,
    Ko,
}

impl Lang {
    pub const ALL: [Lang; 8] = [
        Lang::En,
        Lang::Zh,
        Lang::De,
        Lang::Fr,
        Lang::Es,
        Lang::Vi,
        Lang::Ja,
        Lang::Ko,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Zh => "zh",
            Lang::De => "de",
            Lang::Fr => "fr",
            Lang::Es => "es",
            Lang::Vi => "vi",
            Lang::Ja => "ja",
            Lang::Ko => "ko",
        }
    }

    /// English name used inside prompts.
    pub fn name(self) -> &'static str {
        match self {
            Lang::En => "English",
            Lang::Zh => "Chinese",
            Lang::De => "German",
            Lang::Fr => "French",
            Lang::Es => "Spanish",
            Lang::Vi => "Vietnamese",
            Lang::Ja => "Japanese",
            Lang::Ko => "Korean",
        }
    }

    /// Scripts written without spaces between words get character-level tokens.
    pub fn is_unsegmented(self) -> bool {
        matches!(self, Lang::Zh | Lang::Ja)
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language code `{0}` (known: en, zh, de, fr, es, vi, ja, ko)")]
pub struct UnknownLang(pub String);

impl FromStr for Lang {
    type Err = UnknownLang;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Lang::ALL
            .into_iter()
            .find(|l| l.code() == lower)
            .ok_or_else(|| UnknownLang(s.to_string()))
    }
}

/// Translation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LangPair {
    pub source: Lang,
    pub target: Lang,
}

impl LangPair {
    pub fn new(source: Lang, target: Lang) -> Self {
        Self { source, target }
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LangPair {
    type Err = UnknownLang;

    /// Parses `en-zh` style pairs.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['-', ':', '>'])
            .ok_or_else(|| UnknownLang(s.to_string()))?;
        Ok(LangPair::new(a.parse()?, b.parse()?))
    }
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF)
}

/// Lexical tokenizer used for retrieval. Punctuation is dropped, words are
/// lowercased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tokenizer {
    /// Whitespace and punctuation boundaries, lowercased.
    #[serde(rename = "latin")]
    Latin,
    /// Like `Latin`, but every CJK character is its own token.
    #[serde(rename = "zh-char")]
    ZhChar,
}

impl Tokenizer {
    pub fn id(self) -> &'static str {
        match self {
            Tokenizer::Latin => "latin",
            Tokenizer::ZhChar => "zh-char",
        }
    }

    pub fn for_lang(lang: Lang) -> Self {
        if lang.is_unsegmented() {
            Tokenizer::ZhChar
        } else {
            Tokenizer::Latin
        }
    }

    pub fn tokenize(self, text: &str) -> Vec<String> {
        split_tokens(text, self == Tokenizer::ZhChar, false)
    }
}

impl FromStr for Tokenizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latin" => Ok(Tokenizer::Latin),
            "zh-char" | "zh" => Ok(Tokenizer::ZhChar),
            other => Err(format!("unknown tokenizer `{other}` (expected latin or zh-char)")),
        }
    }
}

/// Tokenization for BLEU: lowercased words, punctuation kept as separate
/// tokens, CJK split per character for unsegmented target languages.
pub fn bleu_tokens(text: &str, target: Lang) -> Vec<String> {
    split_tokens(text, target.is_unsegmented(), true)
}

fn split_tokens(text: &str, split_cjk: bool, keep_punct: bool) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if split_cjk && is_cjk(c) {
            flush(&mut word, &mut out);
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            flush(&mut word, &mut out);
            if keep_punct && !c.is_whitespace() && !c.is_control() {
                out.push(c.to_string());
            }
        }
    }
    flush(&mut word, &mut out);
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

/// Half-open interval of character (not byte) offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Returns the substring covered by `span`, or `None` if it is out of range.
pub fn slice_chars(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let start = byte_offset(text, span.start)?;
    let end = byte_offset(text, span.end)?;
    Some(&text[start..end])
}

fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in text.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

fn char_count(s: &str) -> usize {
    s.chars().count()
}

/// Whether a match at byte range `[start, end)` sits on word boundaries.
/// CJK characters never need a boundary.
fn on_boundary(text: &str, start: usize, end: usize) -> bool {
    let needs = |a: Option<char>, b: Option<char>| match (a, b) {
        (Some(a), Some(b)) => a.is_alphanumeric() && b.is_alphanumeric() && !is_cjk(a) && !is_cjk(b),
        _ => false,
    };
    let before = text[..start].chars().next_back();
    let first = text[start..end].chars().next();
    let last = text[start..end].chars().next_back();
    let after = text[end..].chars().next();
    !needs(before, first) && !needs(last, after)
}

/// Locates `needle` in `text`, preferring the first whole-word occurrence and
/// falling back to the first raw occurrence.
pub fn find_char_span(text: &str, needle: &str) -> Option<CharSpan> {
    if needle.is_empty() {
        return None;
    }
    let mut first_raw = None;
    for (b, m) in text.match_indices(needle) {
        if first_raw.is_none() {
            first_raw = Some(b);
        }
        if on_boundary(text, b, b + m.len()) {
            first_raw = Some(b);
            break;
        }
    }
    first_raw.map(|b| {
        let start = char_count(&text[..b]);
        CharSpan::new(start, start + char_count(needle))
    })
}

/// Counts non-overlapping whole-word occurrences of `needle`.
pub fn count_occurrences(text: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return 0;
    }
    text.match_indices(needle)
        .filter(|(b, m)| on_boundary(text, *b, b + m.len()))
        .count()
}

/// Up to `window` tokens immediately before and after `span`.
pub fn context_window(text: &str, span: CharSpan, window: usize, tokenizer: Tokenizer) -> (Vec<String>, Vec<String>) {
    let before = slice_chars(text, CharSpan::new(0, span.start)).unwrap_or("");
    let after = slice_chars(text, CharSpan::new(span.end, char_count(text))).unwrap_or("");
    let before_tokens = tokenizer.tokenize(before);
    let skip = before_tokens.len().saturating_sub(window);
    let left = before_tokens.into_iter().skip(skip).collect();
    let right = tokenizer.tokenize(after).into_iter().take(window).collect();
    (left, right)
}

/// First `max_chars` characters of `text`, with an ellipsis when cut.
pub fn truncate_chars(text: &str, max_chars: usize) -> String {
    let mut chars = text.chars();
    let head: String = chars.by_ref().take(max_chars).collect();
    if chars.next().is_some() {
        format!("{head}…")
    } else {
        head
    }
}
