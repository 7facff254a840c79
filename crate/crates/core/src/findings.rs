//! The `Finding` contract and character-offset span arithmetic.
//!
//! All offsets count Unicode scalar values (Rust `char`s), never bytes.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    pub fn score(self) -> u8 {
        match self {
            Severity::Low => 1,
            Severity::Medium => 2,
            Severity::High => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Severity::Low),
            "medium" => Ok(Severity::Medium),
            "high" => Ok(Severity::High),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    #[default]
    En,
    De,
}

impl Locale {
    pub fn as_str(self) -> &'static str {
        match self {
            Locale::En => "en",
            Locale::De => "de",
        }
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Locale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Locale::En),
            "de" => Ok(Locale::De),
            other => Err(format!("unsupported locale `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextSpan {
    pub start: usize,
    pub end: usize,
    pub excerpt: String,
}

impl TextSpan {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Moves the span right by `by` characters (used when re-basing chunk offsets).
    pub fn shifted(mut self, by: usize) -> Self {
        self.start += by;
        self.end += by;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpanError {
    #[error("quote is empty")]
    EmptyQuote,
    #[error("quote not found in source")]
    NotFound,
    #[error("span {start}..{end} out of bounds for text of {len} characters")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("excerpt does not match source at {start}..{end}")]
    ExcerptMismatch { start: usize, end: usize },
}

/// A source text with a char-offset → byte-offset table.
#[derive(Debug, Clone)]
pub struct SourceText<'a> {
    text: &'a str,
    // byte offset of every char, plus text.len() as the final sentinel
    offsets: Vec<usize>,
}

impl<'a> SourceText<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        Self { text, offsets }
    }

    pub fn as_str(&self) -> &'a str {
        self.text
    }

    pub fn char_len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.char_len() {
            return None;
        }
        Some(&self.text[self.offsets[start]..self.offsets[end]])
    }

    pub fn byte_to_char(&self, byte: usize) -> Option<usize> {
        self.offsets.binary_search(&byte).ok()
    }

    pub fn span(&self, start: usize, end: usize) -> Result<TextSpan, SpanError> {
        if start >= end {
            return Err(SpanError::OutOfBounds {
                start,
                end,
                len: self.char_len(),
            });
        }
        let excerpt = self.slice(start, end).ok_or(SpanError::OutOfBounds {
            start,
            end,
            len: self.char_len(),
        })?;
        Ok(TextSpan {
            start,
            end,
            excerpt: excerpt.to_string(),
        })
    }

    pub fn validate(&self, span: &TextSpan) -> Result<(), SpanError> {
        let bounds = SpanError::OutOfBounds {
            start: span.start,
            end: span.end,
            len: self.char_len(),
        };
        if span.start >= span.end {
            return Err(bounds);
        }
        match self.slice(span.start, span.end) {
            None => Err(bounds),
            Some(s) if s == span.excerpt => Ok(()),
            Some(_) => Err(SpanError::ExcerptMismatch {
                start: span.start,
                end: span.end,
            }),
        }
    }

    /// Locates `quote` in the text. Exact match first; failing that, a match
    /// with every whitespace run collapsed to a single space, mapped back onto
    /// the original offsets.
    pub fn ground(&self, quote: &str) -> Result<TextSpan, SpanError> {
        if quote.is_empty() {
            return Err(SpanError::EmptyQuote);
        }
        if let Some(byte) = self.text.find(quote) {
            let start = self.byte_to_char(byte).expect("find returns a char boundary");
            let end = start + quote.chars().count();
            return self.span(start, end);
        }

        let needle = collapse_whitespace(quote.chars()).0;
        if needle.is_empty() {
            return Err(SpanError::NotFound);
        }
        let (hay, origin) = collapse_whitespace(self.text.chars());
        let hay_chars: Vec<char> = hay.chars().collect();
        let needle_chars: Vec<char> = needle.chars().collect();
        let pos = hay_chars
            .windows(needle_chars.len())
            .position(|w| w == needle_chars.as_slice())
            .ok_or(SpanError::NotFound)?;
        let start = origin[pos];
        let end = origin[pos + needle_chars.len() - 1] + 1;
        self.span(start, end)
    }
}

/// Collapses whitespace runs to one space and trims both ends. Returns the
/// collapsed string and, for each of its chars, the originating char index.
fn collapse_whitespace(chars: impl Iterator<Item = char>) -> (String, Vec<usize>) {
    let mut out = String::new();
    let mut origin = Vec::new();
    let mut pending_space: Option<usize> = None;
    for (i, c) in chars.enumerate() {
        if c.is_whitespace() {
            if !out.is_empty() && pending_space.is_none() {
                pending_space = Some(i);
            }
        } else {
            if let Some(at) = pending_space.take() {
                out.push(' ');
                origin.push(at);
            }
            out.push(c);
            origin.push(i);
        }
    }
    (out, origin)
}

/// Span of the first occurrence of `quote` in `source`.
pub fn ground_span(source: &str, quote: &str) -> Result<TextSpan, SpanError> {
    SourceText::new(source).ground(quote)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finding {
    pub id: String,
    pub plugin_id: String,
    pub trigger_type_id: String,
    pub bias_triggered: String,
    pub severity: Severity,
    pub span: TextSpan,
    pub explanation: String,
    pub confidence: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FindingError {
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("unknown trigger type `{0}`")]
    UnknownTrigger(String),
    #[error("bias `{found}` does not match taxonomy bias `{expected}` for `{trigger}`")]
    BiasMismatch {
        trigger: String,
        expected: String,
        found: String,
    },
    #[error("explanation is empty")]
    EmptyExplanation,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("unknown moral category `{0}`")]
    UnknownMoralCategory(String),
    #[error("unknown protagonist role `{0}`")]
    UnknownRole(String),
    #[error("moralization finding lists no moral values")]
    NoMoralValues,
}

impl Finding {
    pub fn validate(&self, source: &SourceText<'_>, taxonomy: &Taxonomy) -> Result<(), FindingError> {
        let expected = taxonomy
            .bias_for(&self.trigger_type_id)
            .map_err(|_| FindingError::UnknownTrigger(self.trigger_type_id.clone()))?;
        if expected != self.bias_triggered {
            return Err(FindingError::BiasMismatch {
                trigger: self.trigger_type_id.clone(),
                expected: expected.to_string(),
                found: self.bias_triggered.clone(),
            });
        }
        if self.explanation.trim().is_empty() {
            return Err(FindingError::EmptyExplanation);
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(FindingError::Confidence(self.confidence));
        }
        source.validate(&self.span)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demand {
    Explicit,
    Implicit,
    None,
}

impl FromStr for Demand {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "explicit" | "explizit" => Ok(Demand::Explicit),
            "implicit" | "implizit" => Ok(Demand::Implicit),
            "none" | "keine" | "" => Ok(Demand::None),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleMention {
    pub span: TextSpan,
    pub role_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoralizationFinding {
    pub span: TextSpan,
    pub moral_values: Vec<String>,
    pub demand: Demand,
    pub roles: Vec<RoleMention>,
    pub locale: Locale,
}

impl MoralizationFinding {
    pub fn validate(&self, source: &SourceText<'_>, taxonomy: &Taxonomy) -> Result<(), FindingError> {
        if self.moral_values.is_empty() {
            return Err(FindingError::NoMoralValues);
        }
        if let Some(bad) = self
            .moral_values
            .iter()
            .find(|v| !taxonomy.has_moral_category(v))
        {
            return Err(FindingError::UnknownMoralCategory(bad.clone()));
        }
        source.validate(&self.span)?;
        for role in &self.roles {
            if !taxonomy.has_role(&role.role_id) {
                return Err(FindingError::UnknownRole(role.role_id.clone()));
            }
            source.validate(&role.span)?;
        }
        Ok(())
    }
}

/// Collapses findings sharing `(trigger_type_id, span)` into the one with the
/// highest confidence, then orders by start offset and descending severity.
pub fn dedupe_findings(findings: Vec<Finding>) -> Vec<Finding> {
    let mut slots: HashMap<(String, usize, usize), usize> = HashMap::new();
    let mut kept: Vec<Finding> = Vec::with_capacity(findings.len());
    for f in findings {
        let key = (f.trigger_type_id.clone(), f.span.start, f.span.end);
        match slots.get(&key) {
            Some(&i) => {
                if f.confidence > kept[i].confidence {
                    kept[i] = f;
                }
            }
            None => {
                slots.insert(key, kept.len());
                kept.push(f);
            }
        }
    }
    kept.sort_by_key(|f| (f.span.start, Reverse(f.severity.score())));
    kept
}
