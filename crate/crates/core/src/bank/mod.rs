//! The mutable belief store.
//!
//! A [`MemoryBank`] maps attributes to [`BeliefEntry`] values and advances a
//! logical clock by one per ingested observation. Every ingest appends one
//! [`JournalEvent`]; replaying the journal reproduces the bank exactly.

mod journal;
mod matching;
mod snapshot;
mod types;

pub use journal::{
    journal_replay, read_journal, write_event, EventStatus, JournalError, JournalEvent,
    JOURNAL_SCHEMA_VERSION,
};
pub use matching::match_key;
pub use snapshot::{load_snapshot, Snapshot, SnapshotError, SNAPSHOT_SCHEMA_VERSION};
pub use types::{
    AttributeKey, BeliefEntry, Candidate, CandidateStatus, LogicalTime, VersionCause,
    VersionRecord,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    clip_initial, contradiction_downgrade, noisy_or_merge, BeliefConfig, BeliefError,
    ContradictionMode, EvidenceStrength, Probability,
};
use crate::extraction::{validate_extracted, ExtractError, ExtractedMemory, Extractor, Observation};

#[derive(Debug, Error)]
pub enum BankError {
    #[error("invalid attribute key: {0}")]
    InvalidKey(String),
    #[error("observation `{0}` was already ingested")]
    DuplicateObservation(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("extraction failed for `{id}` (journaled as failed): {source}")]
    ExtractionFailed {
        id: String,
        #[source]
        source: ExtractError,
    },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(Box<AttributeKey>),
    #[error("attribute `{attribute}` has no candidate `{hypothesis}`")]
    UnknownHypothesis {
        attribute: Box<AttributeKey>,
        hypothesis: String,
    },
    #[error("attribute `{attribute}` already has candidate `{hypothesis}`; merge instead")]
    DuplicateCandidate {
        attribute: Box<AttributeKey>,
        hypothesis: String,
    },
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Merge,
    Version,
}

/// One applied update with the candidate's probability before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedOp {
    pub op: OpKind,
    pub attribute: AttributeKey,
    pub hypothesis: String,
    pub before: Option<Probability>,
    pub after: Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub observation_id: String,
    pub seq: u64,
    pub logical_time: LogicalTime,
    /// In application order.
    pub ops_applied: Vec<AppliedOp>,
    /// Extracted items rejected by validation.
    pub dropped: usize,
}

impl IngestReport {
    /// Attributes named by any applied op.
    pub fn touched(&self) -> BTreeSet<&AttributeKey> {
        self.ops_applied.iter().map(|op| &op.attribute).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub attribute: AttributeKey,
    /// `M_c`: active candidates.
    pub active_candidates: usize,
    /// Versions held by each candidate (current value counts as one).
    pub versions_per_candidate: Vec<usize>,
    /// `v_c`: the most versions any candidate of the attribute retains.
    pub retained_versions: usize,
}

impl Default for AttributeKey {
    fn default() -> Self {
        AttributeKey::simple("unknown", "unknown").expect("valid")
    }
}

/// Storage accounting: `O(Σ_c M_c · v_c)` textual entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BankStats {
    pub entries: usize,
    /// `Σ_c M_c`
    pub total_active_candidates: usize,
    /// `Σ_c M_c · v_c`, the storage bound.
    pub storage_bound: usize,
    /// Exact count of stored versions across all candidates.
    pub stored_versions: usize,
    pub journal_len: u64,
    pub logical_clock: LogicalTime,
    pub per_attribute: Vec<AttributeStats>,
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    config: BeliefConfig,
    entries: BTreeMap<AttributeKey, BeliefEntry>,
    logical_clock: LogicalTime,
    observation_ids: BTreeSet<String>,
    /// Events before this sequence number live in a snapshot, not in `journal`.
    journal_base: u64,
    journal: Vec<JournalEvent>,
}

/// Structural equality: same config and state. Journals are not compared.
impl PartialEq for MemoryBank {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.entries == other.entries
            && self.logical_clock == other.logical_clock
            && self.observation_ids == other.observation_ids
            && self.next_seq() == other.next_seq()
    }
}

impl Default for MemoryBank {
    fn default() -> Self {
        Self::new(BeliefConfig::default()).expect("default config is valid")
    }
}

impl MemoryBank {
    pub fn new(config: BeliefConfig) -> Result<Self, BankError> {
        config.validate()?;
        Ok(Self {
            config,
            entries: BTreeMap::new(),
            logical_clock: 0,
            observation_ids: BTreeSet::new(),
            journal_base: 1,
            journal: Vec::new(),
        })
    }

    pub fn config(&self) -> &BeliefConfig {
        &self.config
    }

    pub fn logical_clock(&self) -> LogicalTime {
        self.logical_clock
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &BeliefEntry> {
        self.entries.values()
    }

    pub fn entry(&self, key: &AttributeKey) -> Option<&BeliefEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Events held in memory (those after the last loaded snapshot).
    pub fn journal(&self) -> &[JournalEvent] {
        &self.journal
    }

    /// Sequence number the next journal event will carry.
    pub fn next_seq(&self) -> u64 {
        self.journal_base + self.journal.len() as u64
    }

    pub fn has_observation(&self, id: &str) -> bool {
        self.observation_ids.contains(id)
    }

    pub fn match_attribute(&self, extracted: &ExtractedMemory) -> Option<AttributeKey> {
        match_key(self.entries.keys(), extracted, self.config.match_threshold)
    }

    /// Ingests one observation: extract, validate, dispatch to Add / Merge /
    /// Version, update staleness and journal the event.
    ///
    /// A duplicate id is rejected without touching the journal. An extractor
    /// failure is journaled as a failed event and leaves the bank unchanged.
    pub fn ingest(
        &mut self,
        observation: Observation,
        extractor: &dyn Extractor,
    ) -> Result<IngestReport, BankError> {
        if self.observation_ids.contains(&observation.id) {
            return Err(BankError::DuplicateObservation(observation.id));
        }
        observation
            .validate()
            .map_err(|e| BankError::InvalidObservation(e.to_string()))?;

        let raw = match extractor.extract(&observation) {
            Ok(raw) => raw,
            Err(source) => {
                let id = observation.id.clone();
                self.journal.push(JournalEvent::failed(
                    self.next_seq(),
                    observation,
                    source.to_string(),
                ));
                return Err(BankError::ExtractionFailed { id, source });
            }
        };
        let mut extracted = Vec::with_capacity(raw.len());
        let mut dropped = 0;
        for item in &raw {
            match validate_extracted(item) {
                Ok(m) => extracted.push(m),
                Err(e) => {
                    log::debug!("dropping extracted item from `{}`: {e}", observation.id);
                    dropped += 1;
                }
            }
        }
        Ok(self.ingest_extracted(observation, extracted, dropped))
    }

    /// Applies already-validated extraction output as one journaled step.
    pub fn ingest_extracted(
        &mut self,
        observation: Observation,
        extracted: Vec<ExtractedMemory>,
        dropped: usize,
    ) -> IngestReport {
        let ops = self.apply_step(&observation.id, &extracted);
        let seq = self.next_seq();
        let report = IngestReport {
            observation_id: observation.id.clone(),
            seq,
            logical_time: self.logical_clock,
            ops_applied: ops.clone(),
            dropped,
        };
        self.observation_ids.insert(observation.id.clone());
        self.journal
            .push(JournalEvent::applied(seq, observation, extracted, dropped, ops));
        report
    }

    /// Advances the clock and applies one observation's extracted memories.
    fn apply_step(&mut self, observation_id: &str, items: &[ExtractedMemory]) -> Vec<AppliedOp> {
        self.logical_clock += 1;
        for entry in self.entries.values_mut() {
            entry.staleness_tau += 1;
        }

        let mut ops = Vec::new();
        let mut supported: BTreeMap<AttributeKey, BTreeSet<String>> = BTreeMap::new();
        let mut resolved = Vec::with_capacity(items.len());
        for item in items {
            let key = self
                .match_attribute(item)
                .unwrap_or_else(|| item.attribute_key());
            let hypothesis = item.hypothesis();
            let known = self
                .entries
                .get(&key)
                .is_some_and(|e| e.candidate(&hypothesis).is_some());
            let op = if known {
                let delta = EvidenceStrength::new(item.prob).expect("validated prob");
                self.merge_known(&key, &hypothesis, delta, observation_id)
            } else {
                let initial = clip_initial(item.prob, &self.config).expect("validated prob");
                self.add_new(key.clone(), hypothesis.clone(), initial, observation_id)
            };
            ops.push(op);
            supported.entry(key.clone()).or_default().insert(hypothesis);
            resolved.push(key);
        }

        let mut targets: Vec<(AttributeKey, String)> = Vec::new();
        match self.config.contradiction_mode {
            ContradictionMode::Flagged => {
                for (item, key) in items.iter().zip(&resolved) {
                    let entry = &self.entries[key];
                    for target in item.contradicted() {
                        if !supported[key].contains(target)
                            && entry.active_candidate(target).is_some()
                        {
                            targets.push((key.clone(), target.clone()));
                        }
                    }
                }
            }
            ContradictionMode::Strict => {
                for (key, hyps) in &supported {
                    for c in self.entries[key].active() {
                        if !hyps.contains(&c.hypothesis) {
                            targets.push((key.clone(), c.hypothesis.clone()));
                        }
                    }
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (key, hypothesis) in targets {
            if seen.insert((key.clone(), hypothesis.clone())) {
                ops.push(self.downgrade_known(&key, &hypothesis));
            }
        }

        for key in supported.keys() {
            if let Some(entry) = self.entries.get_mut(key) {
                entry.staleness_tau = 0;
            }
        }
        ops
    }

    fn add_new(
        &mut self,
        key: AttributeKey,
        hypothesis: String,
        initial: Probability,
        observation_id: &str,
    ) -> AppliedOp {
        let now = self.logical_clock;
        let candidate = Candidate::new(hypothesis.clone(), initial, now, observation_id);
        let entry = self.entries.entry(key.clone()).or_insert_with(|| BeliefEntry {
            attribute: key.clone(),
            candidates: Vec::new(),
            staleness_tau: 0,
            created_at: now,
        });
        entry.candidates.push(candidate);
        entry.staleness_tau = 0;
        AppliedOp {
            op: OpKind::Add,
            attribute: key,
            hypothesis,
            before: None,
            after: initial,
        }
    }

    fn merge_known(
        &mut self,
        key: &AttributeKey,
        hypothesis: &str,
        delta: EvidenceStrength,
        observation_id: &str,
    ) -> AppliedOp {
        let now = self.logical_clock;
        let entry = self.entries.get_mut(key).expect("known attribute");
        let candidate = entry.candidate_mut(hypothesis).expect("known candidate");
        let before = candidate.probability;
        let after = noisy_or_merge(before, delta);
        candidate.set_probability(after, now, VersionCause::Merge);
        candidate.status = CandidateStatus::Active;
        candidate.add_evidence(observation_id);
        entry.staleness_tau = 0;
        AppliedOp {
            op: OpKind::Merge,
            attribute: key.clone(),
            hypothesis: hypothesis.to_owned(),
            before: Some(before),
            after,
        }
    }

    fn downgrade_known(&mut self, key: &AttributeKey, hypothesis: &str) -> AppliedOp {
        let now = self.logical_clock;
        let entry = self.entries.get_mut(key).expect("known attribute");
        let candidate = entry.candidate_mut(hypothesis).expect("known candidate");
        let outcome = contradiction_downgrade(candidate.probability, &self.config);
        candidate.set_probability(outcome.new, now, VersionCause::Contradiction);
        entry.staleness_tau = 0;
        AppliedOp {
            op: OpKind::Version,
            attribute: key.clone(),
            hypothesis: hypothesis.to_owned(),
            before: Some(outcome.archived),
            after: outcome.new,
        }
    }

    /// Adds a candidate for `extracted` at the current logical time without
    /// advancing the clock or journaling. Prefer [`MemoryBank::ingest`]; banks
    /// mutated through the `apply_*` methods no longer equal their journal replay.
    pub fn apply_add(
        &mut self,
        extracted: &ExtractedMemory,
        observation_id: &str,
    ) -> Result<AppliedOp, BankError> {
        let key = self
            .match_attribute(extracted)
            .unwrap_or_else(|| extracted.attribute_key());
        let hypothesis = extracted.hypothesis();
        if self
            .entries
            .get(&key)
            .is_some_and(|e| e.candidate(&hypothesis).is_some())
        {
            return Err(BankError::DuplicateCandidate {
                attribute: Box::new(key),
                hypothesis,
            });
        }
        let initial = clip_initial(extracted.prob, &self.config)?;
        Ok(self.add_new(key, hypothesis, initial, observation_id))
    }

    /// Noisy-OR merges `delta` into an existing candidate at the current time.
    pub fn apply_merge(
        &mut self,
        key: &AttributeKey,
        hypothesis: &str,
        delta: f64,
        observation_id: &str,
    ) -> Result<AppliedOp, BankError> {
        self.require_active(key, hypothesis)?;
        let delta = EvidenceStrength::new(delta)?;
        Ok(self.merge_known(key, hypothesis, delta, observation_id))
    }

    /// Downgrades each listed candidate to the contradiction value. All
    /// hypotheses are checked before any is modified.
    pub fn apply_contradiction(
        &mut self,
        key: &AttributeKey,
        contradicted: &[String],
    ) -> Result<Vec<AppliedOp>, BankError> {
        for hypothesis in contradicted {
            self.require_active(key, hypothesis)?;
        }
        Ok(contradicted
            .iter()
            .map(|h| self.downgrade_known(key, h))
            .collect())
    }

    fn require_active(&self, key: &AttributeKey, hypothesis: &str) -> Result<(), BankError> {
        let entry = self
            .entries
            .get(key)
            .ok_or_else(|| BankError::UnknownAttribute(Box::new(key.clone())))?;
        entry
            .active_candidate(hypothesis)
            .map(|_| ())
            .ok_or_else(|| BankError::UnknownHypothesis {
                attribute: Box::new(key.clone()),
                hypothesis: hypothesis.to_owned(),
            })
    }

    pub fn stats(&self) -> BankStats {
        let per_attribute: Vec<AttributeStats> = self
            .entries
            .values()
            .map(|entry| {
                let versions: Vec<usize> = entry.active().map(Candidate::version_count).collect();
                AttributeStats {
                    attribute: entry.attribute.clone(),
                    active_candidates: versions.len(),
                    retained_versions: versions.iter().copied().max().unwrap_or(0),
                    versions_per_candidate: versions,
                }
            })
            .collect();
        BankStats {
            entries: self.entries.len(),
            total_active_candidates: per_attribute.iter().map(|a| a.active_candidates).sum(),
            storage_bound: per_attribute
                .iter()
                .map(|a| a.active_candidates * a.retained_versions)
                .sum(),
            stored_versions: self
                .entries
                .values()
                .flat_map(|e| &e.candidates)
                .map(Candidate::version_count)
                .sum(),
            journal_len: self.next_seq() - 1,
            logical_clock: self.logical_clock,
            per_attribute,
        }
    }

    #[cfg(test)]
    pub(crate) fn advance_clock_for_test(&mut self) {
        self.logical_clock += 1;
        for entry in self.entries.values_mut() {
            entry.staleness_tau += 1;
        }
    }
}
