//! Whole-bank snapshots.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AttributeKey, BankError, BeliefEntry, JournalError, JournalEvent, LogicalTime, MemoryBank};
use crate::belief::BeliefConfig;
use crate::canonical::{canonical_digest, to_canonical_string};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub logical_clock: LogicalTime,
    /// Sequence number of the first journal event not covered.
    pub next_seq: u64,
    pub config: BeliefConfig,
    pub observation_ids: BTreeSet<String>,
    pub entries: Vec<BeliefEntry>,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot schema_version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

impl Snapshot {
    pub fn to_canonical_string(&self) -> String {
        to_canonical_string(self).expect("snapshots serialize")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        canonical_digest(self).expect("snapshots serialize")
    }
}

/// Parses a snapshot document. The schema version is checked before anything
/// else so an incompatible file is never partially loaded.
pub fn load_snapshot(text: &str) -> Result<MemoryBank, SnapshotError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| SnapshotError::Malformed("missing schema_version".into()))?;
    if found != u64::from(SNAPSHOT_SCHEMA_VERSION) {
        return Err(SnapshotError::Version {
            found,
            expected: SNAPSHOT_SCHEMA_VERSION,
        });
    }
    let snapshot: Snapshot =
        serde_json::from_value(value).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
    MemoryBank::from_snapshot(snapshot)
}

impl MemoryBank {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            logical_clock: self.logical_clock,
            next_seq: self.next_seq(),
            config: self.config.clone(),
            observation_ids: self.observation_ids.clone(),
            entries: self.entries.values().cloned().collect(),
        }
    }

    pub fn from_snapshot(snapshot: Snapshot) -> Result<Self, SnapshotError> {
        if snapshot.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(SnapshotError::Version {
                found: u64::from(snapshot.schema_version),
                expected: SNAPSHOT_SCHEMA_VERSION,
            });
        }
        if snapshot.next_seq == 0 {
            return Err(SnapshotError::Malformed("next_seq must be at least 1".into()));
        }
        let mut bank = MemoryBank::new(snapshot.config)?;
        for entry in snapshot.entries {
            let key: AttributeKey = entry.attribute.clone();
            if bank.entries.insert(key.clone(), entry).is_some() {
                return Err(SnapshotError::Malformed(format!("attribute `{key}` listed twice")));
            }
        }
        bank.logical_clock = snapshot.logical_clock;
        bank.observation_ids = snapshot.observation_ids;
        bank.journal_base = snapshot.next_seq;
        Ok(bank)
    }

    /// Canonical digest of the bank's snapshot.
    pub fn digest(&self) -> String {
        self.snapshot().digest()
    }

    /// Loads a snapshot then replays the journal events it does not cover.
    /// Events already reflected in the snapshot are skipped.
    pub fn from_snapshot_and_journal(
        snapshot: Snapshot,
        events: &[JournalEvent],
    ) -> Result<Self, SnapshotError> {
        let mut bank = Self::from_snapshot(snapshot)?;
        let start = bank.next_seq();
        let suffix: Vec<JournalEvent> = events.iter().filter(|e| e.seq >= start).cloned().collect();
        bank.replay_events(&suffix)?;
        Ok(bank)
    }
}
