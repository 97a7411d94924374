//! Deterministic rule extractor over pipe-delimited SVO lines:
//!
//! ```text
//! subject | predicate | object | prob | time_text | contradicts [| type]
//! ```
//!
//! `contradicts` is a comma-separated list of `!`-prefixed hypotheses. Lines
//! starting with `#` and blank lines are skipped. The optional seventh field
//! overrides the memory type (default `observation`).

use super::{
    validate_extracted, ExtractError, ExtractedMemory, Extractor, MemoryType, Observation,
    RawMemory,
};

/// One parsed SVO line.
#[derive(Debug, Clone, PartialEq)]
pub struct SvoRecord {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub prob: f64,
    pub time_text: String,
    pub contradicts: Vec<String>,
    pub kind: MemoryType,
}

/// Parses one line. Returns `Ok(None)` for comments and blank lines.
pub fn parse_svo_line(line: &str, line_no: usize) -> Result<Option<SvoRecord>, ExtractError> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let err = |message: String| ExtractError::MalformedLine {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
    if fields.len() < 4 || fields.len() > 7 {
        return Err(err(format!(
            "expected 4 to 7 `|`-separated fields, found {}",
            fields.len()
        )));
    }
    let (subject, predicate, object) = (fields[0], fields[1], fields[2]);
    for (name, value) in [("subject", subject), ("predicate", predicate), ("object", object)] {
        if value.is_empty() {
            return Err(err(format!("empty {name}")));
        }
    }
    let prob: f64 = fields[3]
        .parse()
        .map_err(|_| err(format!("prob `{}` is not a number", fields[3])))?;
    if !(0.0..=1.0).contains(&prob) {
        return Err(err(format!("prob {prob} outside [0, 1]")));
    }
    let time_text = fields.get(4).copied().unwrap_or_default().to_owned();
    let mut contradicts = Vec::new();
    if let Some(spec) = fields.get(5).filter(|s| !s.is_empty()) {
        for target in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match target.strip_prefix('!') {
                Some(h) if !h.trim().is_empty() => contradicts.push(h.trim().to_owned()),
                _ => {
                    return Err(err(format!(
                        "contradiction target `{target}` must be `!`-prefixed"
                    )))
                }
            }
        }
    }
    let kind = match fields.get(6).filter(|s| !s.is_empty()) {
        None => MemoryType::Observation,
        Some(tag) => MemoryType::parse(tag)
            .ok_or_else(|| err(format!("unknown memory type `{tag}`")))?,
    };
    Ok(Some(SvoRecord {
        subject: subject.to_owned(),
        predicate: predicate.to_owned(),
        object: object.to_owned(),
        prob,
        time_text,
        contradicts,
        kind,
    }))
}

impl SvoRecord {
    fn into_raw(self, observation: &Observation) -> RawMemory {
        RawMemory {
            kind: self.kind.as_str().to_owned(),
            canonical_text: format!("{} {} {}", self.subject, self.predicate, self.object),
            subject: self.subject,
            predicate: self.predicate,
            object: self.object,
            dialog_ids: vec![observation.id.clone()],
            time_text: self.time_text,
            relative_time: observation.timestamp_text.clone().unwrap_or_default(),
            prob: Some(self.prob),
            contradicts: (!self.contradicts.is_empty()).then_some(self.contradicts),
            ..RawMemory::default()
        }
    }
}

/// One validated memory per SVO record of the observation, in line order.
pub fn rule_extract(observation: &Observation) -> Result<Vec<ExtractedMemory>, ExtractError> {
    let Some(lines) = &observation.structured_lines else {
        return Err(ExtractError::InvalidObservation(format!(
            "observation `{}` has no structured lines",
            observation.id
        )));
    };
    let mut out = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        if let Some(record) = parse_svo_line(line, line_no)? {
            let memory = validate_extracted(&record.into_raw(observation)).map_err(|e| {
                ExtractError::MalformedLine {
                    line: line_no,
                    message: e.to_string(),
                }
            })?;
            out.push(memory);
        }
    }
    Ok(out)
}

/// [`Extractor`] over structured lines. Observations with only free text
/// yield nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleExtractor;

impl Extractor for RuleExtractor {
    fn extract(&self, observation: &Observation) -> Result<Vec<RawMemory>, ExtractError> {
        if observation.structured_lines.is_none() {
            return Ok(Vec::new());
        }
        Ok(rule_extract(observation)?
            .into_iter()
            .map(RawMemory::from)
            .collect())
    }
}
