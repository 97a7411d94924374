//! Observation to structured memory extraction.
//!
//! Extractors return [`RawMemory`] items exactly as produced (possibly
//! malformed). [`validate_extracted`] is the only way to obtain an
//! [`ExtractedMemory`], so nothing unvalidated reaches the memory bank.

mod remote;
mod svo;

pub use remote::{RemoteExtractor, RemoteExtractorConfig, EXTRACTION_PROMPT};
pub use svo::{parse_svo_line, rule_extract, RuleExtractor, SvoRecord};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::AttributeKey;
use crate::text::normalize;

/// Longest accepted `time_text`, in whitespace-separated words.
pub const MAX_TIME_TEXT_WORDS: usize = 6;

/// One input to the memory: a piece of raw text and/or pre-structured SVO lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured_lines: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_tag: Option<String>,
}

impl Observation {
    pub fn from_text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            structured_lines: None,
            timestamp_text: None,
            session_tag: None,
        }
    }

    pub fn structured<I, S>(id: impl Into<String>, text: impl Into<String>, lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            structured_lines: Some(lines.into_iter().map(Into::into).collect()),
            ..Self::from_text(id, text)
        }
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.id.trim().is_empty() {
            return Err(ExtractError::InvalidObservation("empty id".into()));
        }
        if self.text.trim().is_empty() && self.structured_lines.is_none() {
            return Err(ExtractError::InvalidObservation(format!(
                "observation `{}` has neither text nor structured lines",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryType {
    Observation,
    Event,
    Profile,
    Anchor,
    Episode,
}

impl MemoryType {
    pub const ALL: [MemoryType; 5] = [
        Self::Observation,
        Self::Event,
        Self::Profile,
        Self::Anchor,
        Self::Episode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Observation => "observation",
            Self::Event => "event",
            Self::Profile => "profile",
            Self::Anchor => "anchor",
            Self::Episode => "episode",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s.trim())
    }
}

impl fmt::Display for MemoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Extractor output before validation. Every field is lenient.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RawMemory {
    #[serde(rename = "type")]
    pub kind: String,
    pub canonical_text: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub participants: Vec<String>,
    pub entities: Vec<String>,
    pub qualifiers: Vec<String>,
    pub dialog_ids: Vec<String>,
    pub time_text: String,
    pub relative_time: String,
    pub prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contradicts: Option<Vec<String>>,
}

/// A validated, normalized memory item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedMemory {
    #[serde(rename = "type")]
    pub kind: MemoryType,
    pub canonical_text: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub participants: Vec<String>,
    pub entities: Vec<String>,
    pub qualifiers: Vec<String>,
    pub dialog_ids: Vec<String>,
    pub time_text: String,
    pub relative_time: String,
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contradicts: Option<Vec<String>>,
}

impl ExtractedMemory {
    /// The attribute this memory speaks about, built from its stable slots.
    pub fn attribute_key(&self) -> AttributeKey {
        AttributeKey::new(
            &self.subject,
            &self.predicate,
            &self.entities,
            &self.qualifiers,
        )
        .expect("validated memory has non-empty subject and predicate")
    }

    /// The candidate conclusion: the object slot, or the canonical text when
    /// the object is empty.
    pub fn hypothesis(&self) -> String {
        if self.object.is_empty() {
            normalize(&self.canonical_text)
        } else {
            self.object.clone()
        }
    }

    /// Hypotheses this memory declares contradicted, normalized.
    pub fn contradicted(&self) -> &[String] {
        self.contradicts.as_deref().unwrap_or(&[])
    }
}

impl From<ExtractedMemory> for RawMemory {
    fn from(m: ExtractedMemory) -> Self {
        RawMemory {
            kind: m.kind.as_str().to_owned(),
            canonical_text: m.canonical_text,
            subject: m.subject,
            predicate: m.predicate,
            object: m.object,
            participants: m.participants,
            entities: m.entities,
            qualifiers: m.qualifiers,
            dialog_ids: m.dialog_ids,
            time_text: m.time_text,
            relative_time: m.relative_time,
            prob: Some(m.prob),
            contradicts: m.contradicts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid memory: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ValidationError(pub Vec<FieldViolation>);

impl ValidationError {
    pub fn fields(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.0.iter().map(|v| v.field)
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("remote extractor: {0}")]
    Remote(String),
}

fn normalize_list(items: &[String]) -> Vec<String> {
    let mut out: Vec<String> = items
        .iter()
        .map(|s| normalize(s))
        .filter(|s| !s.is_empty())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Checks the schema rules and returns the normalized memory.
///
/// All violations are collected, not just the first.
pub fn validate_extracted(raw: &RawMemory) -> Result<ExtractedMemory, ValidationError> {
    let mut violations = Vec::new();
    let mut violate = |field: &'static str, message: String| {
        violations.push(FieldViolation { field, message })
    };

    let kind = MemoryType::parse(&raw.kind);
    if kind.is_none() {
        violate(
            "type",
            format!(
                "`{}` is not one of observation, event, profile, anchor, episode",
                raw.kind
            ),
        );
    }
    let canonical_text = raw.canonical_text.trim().to_owned();
    if canonical_text.is_empty() {
        violate("canonical_text", "must not be empty".into());
    }
    let subject = normalize(&raw.subject);
    if subject.is_empty() {
        violate("subject", "must not be empty".into());
    }
    let predicate = normalize(&raw.predicate);
    if predicate.is_empty() {
        violate("predicate", "must not be empty".into());
    }
    let object = normalize(&raw.object);
    if object.is_empty() && normalize(&canonical_text).is_empty() {
        violate("object", "no hypothesis text in object or canonical_text".into());
    }
    match raw.prob {
        None => violate("prob", "missing".into()),
        Some(p) if !(0.0..=1.0).contains(&p) => violate("prob", format!("{p} outside [0, 1]")),
        Some(_) => {}
    }
    let time_text = raw.time_text.trim().to_owned();
    let words = time_text.split_whitespace().count();
    if words > MAX_TIME_TEXT_WORDS {
        violate(
            "time_text",
            format!("{words} words; must be a short time phrase of at most {MAX_TIME_TEXT_WORDS}"),
        );
    }
    let contradicts = raw.contradicts.as_ref().map(|c| normalize_list(c));

    if !violations.is_empty() {
        return Err(ValidationError(violations));
    }
    Ok(ExtractedMemory {
        kind: kind.expect("checked"),
        canonical_text,
        subject,
        predicate,
        object,
        participants: normalize_list(&raw.participants),
        entities: normalize_list(&raw.entities),
        qualifiers: normalize_list(&raw.qualifiers),
        dialog_ids: raw.dialog_ids.iter().map(|s| s.trim().to_owned()).collect(),
        time_text,
        relative_time: raw.relative_time.trim().to_owned(),
        prob: raw.prob.expect("checked"),
        contradicts: contradicts.filter(|c| !c.is_empty()),
    })
}

/// Turns an observation into candidate memories.
pub trait Extractor: Send + Sync {
    fn extract(&self, observation: &Observation) -> Result<Vec<RawMemory>, ExtractError>;
}
