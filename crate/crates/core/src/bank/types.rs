use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::BankError;
use crate::belief::Probability;
use crate::text::normalize;

/// Logical time: one step per ingested observation.
pub type LogicalTime = u64;

/// Identity of a latent attribute, built from its stable semantic slots.
///
/// All slots are normalized on construction; two keys are the same attribute
/// iff all four slots are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "KeyRepr", into = "KeyRepr")]
pub struct AttributeKey {
    subject: String,
    predicate: String,
    entities: BTreeSet<String>,
    qualifiers: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct KeyRepr {
    subject: String,
    predicate: String,
    entities: BTreeSet<String>,
    qualifiers: BTreeSet<String>,
}

impl TryFrom<KeyRepr> for AttributeKey {
    type Error = BankError;

    fn try_from(r: KeyRepr) -> Result<Self, Self::Error> {
        AttributeKey::new(&r.subject, &r.predicate, &r.entities, &r.qualifiers)
    }
}

impl From<AttributeKey> for KeyRepr {
    fn from(k: AttributeKey) -> Self {
        KeyRepr {
            subject: k.subject,
            predicate: k.predicate,
            entities: k.entities,
            qualifiers: k.qualifiers,
        }
    }
}

impl AttributeKey {
    pub fn new<E, Q>(
        subject: &str,
        predicate: &str,
        entities: E,
        qualifiers: Q,
    ) -> Result<Self, BankError>
    where
        E: IntoIterator,
        E::Item: AsRef<str>,
        Q: IntoIterator,
        Q::Item: AsRef<str>,
    {
        let subject = normalize(subject);
        let predicate = normalize(predicate);
        if subject.is_empty() || predicate.is_empty() {
            return Err(BankError::InvalidKey(
                "subject and predicate must be non-empty after normalization".into(),
            ));
        }
        let entities = entities
            .into_iter()
            .map(|e| normalize(e.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        let qualifiers = qualifiers
            .into_iter()
            .map(|q| normalize(q.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        Ok(Self {
            subject,
            predicate,
            entities,
            qualifiers,
        })
    }

    /// Key with only subject and predicate.
    pub fn simple(subject: &str, predicate: &str) -> Result<Self, BankError> {
        Self::new(subject, predicate, [""; 0], [""; 0])
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn entities(&self) -> &BTreeSet<String> {
        &self.entities
    }

    pub fn qualifiers(&self) -> &BTreeSet<String> {
        &self.qualifiers
    }

    /// Role-tagged slot units used for fuzzy attribute matching. Each slot
    /// value is one unit: `{"s:api x", "p:status", "e:timeout"}`.
    pub fn slot_units(&self) -> BTreeSet<String> {
        let mut units = BTreeSet::new();
        units.insert(format!("s:{}", self.subject));
        units.insert(format!("p:{}", self.predicate));
        units.extend(self.entities.iter().map(|e| format!("e:{e}")));
        units.extend(self.qualifiers.iter().map(|q| format!("q:{q}")));
        units
    }

    /// All slot values joined by spaces, used as the attribute side of similarity.
    pub fn slot_text(&self) -> String {
        let mut parts = vec![self.subject.as_str(), self.predicate.as_str()];
        parts.extend(self.entities.iter().map(String::as_str));
        parts.extend(self.qualifiers.iter().map(String::as_str));
        parts.join(" ")
    }
}

/// Serialized form `subject|predicate|e1,e2|q1,q2`, used for deterministic
/// tie-breaking and on the command line.
impl fmt::Display for AttributeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        write!(
            f,
            "{}|{}|{}|{}",
            self.subject,
            self.predicate,
            join(&self.entities),
            join(&self.qualifiers)
        )
    }
}

impl std::str::FromStr for AttributeKey {
    type Err = BankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('|').collect();
        if parts.len() < 2 || parts.len() > 4 {
            return Err(BankError::InvalidKey(format!(
                "`{s}` is not `subject|predicate[|entities[|qualifiers]]`"
            )));
        }
        let list = |i: usize| -> Vec<&str> {
            parts
                .get(i)
                .map(|p| p.split(',').collect())
                .unwrap_or_default()
        };
        AttributeKey::new(parts[0], parts[1], list(2), list(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    Active,
    Archived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionCause {
    Merge,
    Contradiction,
}

/// A superseded probability and the half-open interval `[valid_from, valid_until)`
/// during which it was current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionRecord {
    pub probability: Probability,
    pub valid_from: LogicalTime,
    pub valid_until: LogicalTime,
    pub cause: VersionCause,
}

/// One hypothesis for an attribute with its evidence-based probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub hypothesis: String,
    pub probability: Probability,
    pub status: CandidateStatus,
    pub created_at: LogicalTime,
    pub last_updated_at: LogicalTime,
    pub evidence_refs: Vec<String>,
    pub version_history: Vec<VersionRecord>,
}

impl Candidate {
    pub(crate) fn new(
        hypothesis: String,
        probability: Probability,
        now: LogicalTime,
        evidence: &str,
    ) -> Self {
        Self {
            hypothesis,
            probability,
            status: CandidateStatus::Active,
            created_at: now,
            last_updated_at: now,
            evidence_refs: vec![evidence.to_owned()],
            version_history: Vec::new(),
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == CandidateStatus::Active
    }

    /// Start of the interval the current probability covers.
    pub fn current_since(&self) -> LogicalTime {
        self.version_history
            .last()
            .map_or(self.created_at, |r| r.valid_until)
    }

    /// Versions held, the current one included.
    pub fn version_count(&self) -> usize {
        self.version_history.len() + 1
    }

    /// The probability that was current at `t`, or `None` before creation.
    pub fn probability_at(&self, t: LogicalTime) -> Option<Probability> {
        if t < self.created_at {
            return None;
        }
        if t >= self.current_since() {
            return Some(self.probability);
        }
        // records tile [created_at, current_since) in order
        let idx = self.version_history.partition_point(|r| r.valid_until <= t);
        self.version_history.get(idx).map(|r| r.probability)
    }

    /// Replaces the current probability at time `now`, archiving the old
    /// value. Several updates within one step leave one record: the value that
    /// held before the step.
    pub(crate) fn set_probability(
        &mut self,
        probability: Probability,
        now: LogicalTime,
        cause: VersionCause,
    ) {
        let since = self.current_since();
        if since < now {
            self.version_history.push(VersionRecord {
                probability: self.probability,
                valid_from: since,
                valid_until: now,
                cause,
            });
        }
        self.probability = probability;
        self.last_updated_at = now;
    }

    pub(crate) fn add_evidence(&mut self, evidence: &str) {
        if self.evidence_refs.last().map(String::as_str) != Some(evidence) {
            self.evidence_refs.push(evidence.to_owned());
        }
    }

    /// Every step at which this candidate was written.
    pub(crate) fn touch_times(&self) -> impl Iterator<Item = LogicalTime> + '_ {
        std::iter::once(self.created_at)
            .chain(self.version_history.iter().map(|r| r.valid_until))
            .chain(std::iter::once(self.last_updated_at))
    }
}

/// An attribute with every evidenced candidate. The unit of storage and retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefEntry {
    pub attribute: AttributeKey,
    pub candidates: Vec<Candidate>,
    /// Steps since any candidate of this entry was last written.
    pub staleness_tau: u64,
    pub created_at: LogicalTime,
}

impl BeliefEntry {
    pub fn candidate(&self, hypothesis: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.hypothesis == hypothesis)
    }

    pub(crate) fn candidate_mut(&mut self, hypothesis: &str) -> Option<&mut Candidate> {
        self.candidates.iter_mut().find(|c| c.hypothesis == hypothesis)
    }

    pub fn active_candidate(&self, hypothesis: &str) -> Option<&Candidate> {
        self.candidate(hypothesis).filter(|c| c.is_active())
    }

    pub fn active(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.is_active())
    }

    /// Last step at which any candidate was written.
    pub fn last_updated_at(&self) -> LogicalTime {
        self.candidates
            .iter()
            .map(|c| c.last_updated_at)
            .max()
            .unwrap_or(self.created_at)
    }

    /// Last write at or before `t`, if the entry existed then.
    pub fn last_touch_at_or_before(&self, t: LogicalTime) -> Option<LogicalTime> {
        self.candidates
            .iter()
            .flat_map(Candidate::touch_times)
            .filter(|&x| x <= t)
            .max()
    }

    /// Active candidates ordered by probability, highest first; ties by text.
    pub fn ranked(&self) -> Vec<&Candidate> {
        let mut out: Vec<&Candidate> = self.active().collect();
        out.sort_by(|a, b| {
            b.probability
                .get()
                .total_cmp(&a.probability.get())
                .then_with(|| a.hypothesis.cmp(&b.hypothesis))
        });
        out
    }
}
