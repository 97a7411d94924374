//! Append-only event log, one canonical JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AppliedOp, BankError, MemoryBank};
use crate::belief::BeliefConfig;
use crate::canonical::to_canonical_string;
use crate::extraction::{ExtractedMemory, Observation};

pub const JOURNAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventStatus {
    Applied,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEvent {
    pub schema_version: u32,
    /// 1-based position in the journal.
    pub seq: u64,
    pub status: EventStatus,
    pub observation: Observation,
    /// Validated extraction output; replay applies this instead of re-extracting.
    pub extracted: Vec<ExtractedMemory>,
    pub dropped: usize,
    pub ops_applied: Vec<AppliedOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl JournalEvent {
    pub(crate) fn applied(
        seq: u64,
        observation: Observation,
        extracted: Vec<ExtractedMemory>,
        dropped: usize,
        ops_applied: Vec<AppliedOp>,
    ) -> Self {
        Self {
            schema_version: JOURNAL_SCHEMA_VERSION,
            seq,
            status: EventStatus::Applied,
            observation,
            extracted,
            dropped,
            ops_applied,
            error: None,
        }
    }

    pub(crate) fn failed(seq: u64, observation: Observation, error: String) -> Self {
        Self {
            schema_version: JOURNAL_SCHEMA_VERSION,
            seq,
            status: EventStatus::Failed,
            observation,
            extracted: Vec::new(),
            dropped: 0,
            ops_applied: Vec::new(),
            error: Some(error),
        }
    }

    pub fn to_canonical_line(&self) -> String {
        to_canonical_string(self).expect("journal events serialize")
    }
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt journal record at line {line} (byte offset {offset}): {message}")]
    Corrupt {
        line: usize,
        offset: u64,
        message: String,
    },
    #[error("event {seq}: unsupported schema_version {found}")]
    SchemaVersion { seq: u64, found: u32 },
    #[error("out-of-order event: expected seq {expected}, found {found}")]
    OutOfOrder { expected: u64, found: u64 },
    #[error("event {seq} diverges on replay: {message}")]
    Divergence { seq: u64, message: String },
    #[error(transparent)]
    Bank(#[from] BankError),
}

impl JournalError {
    /// Sequence number or line of the first bad event, when known.
    pub fn position(&self) -> Option<u64> {
        match self {
            JournalError::Corrupt { line, .. } => Some(*line as u64),
            JournalError::SchemaVersion { seq, .. } | JournalError::Divergence { seq, .. } => {
                Some(*seq)
            }
            JournalError::OutOfOrder { found, .. } => Some(*found),
            _ => None,
        }
    }
}

pub fn write_event<W: Write>(out: &mut W, event: &JournalEvent) -> std::io::Result<()> {
    out.write_all(event.to_canonical_line().as_bytes())?;
    out.write_all(b"\n")
}

/// Parses NDJSON events. Blank lines are skipped; a line that does not parse,
/// including a final line cut short, is reported with its byte offset.
pub fn read_journal<R: BufRead>(reader: R) -> Result<Vec<JournalEvent>, JournalError> {
    let mut events = Vec::new();
    let mut offset = 0u64;
    let mut reader = reader;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let text = buf.trim();
        if !text.is_empty() {
            let event: JournalEvent =
                serde_json::from_str(text).map_err(|e| JournalError::Corrupt {
                    line: line_no,
                    offset,
                    message: e.to_string(),
                })?;
            events.push(event);
        }
        offset += n as u64;
    }
    Ok(events)
}

/// Rebuilds a bank from a complete journal.
pub fn journal_replay(events: &[JournalEvent], config: BeliefConfig) -> Result<MemoryBank, JournalError> {
    let mut bank = MemoryBank::new(config)?;
    bank.replay_events(events)?;
    Ok(bank)
}

impl MemoryBank {
    /// Applies recorded events in order, checking each one's sequence number
    /// and recorded ops against what the bank actually does.
    pub fn replay_events(&mut self, events: &[JournalEvent]) -> Result<(), JournalError> {
        for event in events {
            if event.schema_version != JOURNAL_SCHEMA_VERSION {
                return Err(JournalError::SchemaVersion {
                    seq: event.seq,
                    found: event.schema_version,
                });
            }
            let expected = self.next_seq();
            if event.seq != expected {
                return Err(JournalError::OutOfOrder {
                    expected,
                    found: event.seq,
                });
            }
            match event.status {
                EventStatus::Failed => self.journal.push(event.clone()),
                EventStatus::Applied => {
                    if self.has_observation(&event.observation.id) {
                        return Err(JournalError::Divergence {
                            seq: event.seq,
                            message: format!("observation `{}` repeated", event.observation.id),
                        });
                    }
                    let report = self.ingest_extracted(
                        event.observation.clone(),
                        event.extracted.clone(),
                        event.dropped,
                    );
                    if report.ops_applied != event.ops_applied {
                        return Err(JournalError::Divergence {
                            seq: event.seq,
                            message: "recomputed ops differ from the recorded ones".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::RuleExtractor;
    use std::io::Cursor;

    fn sample_bank() -> MemoryBank {
        let mut bank = MemoryBank::default();
        let timeout = [
            "api_x | status | failed | 0.7 | |",
            "api_x | status | rate limited | 0.6 | |",
        ];
        for (id, lines) in [
            ("t1", &timeout[..]),
            ("t2", &timeout[..]),
            ("ok", &["api_x | status | operational | 0.9 | | !failed,!rate limited"][..]),
        ] {
            bank.ingest(Observation::structured(id, "", lines.iter().copied()), &RuleExtractor)
                .unwrap();
        }
        bank
    }

    fn to_ndjson(events: &[JournalEvent]) -> Vec<u8> {
        let mut out = Vec::new();
        for e in events {
            write_event(&mut out, e).unwrap();
        }
        out
    }

    #[test]
    fn empty_journal_empty_bank() {
        let bank = journal_replay(&[], BeliefConfig::default()).unwrap();
        assert_eq!(bank, MemoryBank::default());
        assert!(read_journal(Cursor::new("")).unwrap().is_empty());
    }

    #[test]
    fn text_round_trip_replays_to_live_bank() {
        let live = sample_bank();
        let bytes = to_ndjson(live.journal());
        let events = read_journal(Cursor::new(&bytes)).unwrap();
        assert_eq!(events, live.journal());
        let replayed = journal_replay(&events, BeliefConfig::default()).unwrap();
        assert_eq!(replayed, live);
        assert_eq!(to_ndjson(replayed.journal()), bytes);
    }

    #[test]
    fn truncated_line_reports_offset() {
        let bytes = to_ndjson(sample_bank().journal());
        let text = String::from_utf8(bytes).unwrap();
        let second_line_start = text.find('\n').unwrap() + 1;
        let cut = &text[..second_line_start + 40];
        match read_journal(Cursor::new(cut)) {
            Err(JournalError::Corrupt { line, offset, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(offset, second_line_start as u64);
            }
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn out_of_order_and_tampered_events() {
        let live = sample_bank();
        let mut events = live.journal().to_vec();
        events.swap(0, 1);
        let err = journal_replay(&events, BeliefConfig::default()).unwrap_err();
        assert!(matches!(err, JournalError::OutOfOrder { expected: 1, found: 2 }));
        assert_eq!(err.position(), Some(2));

        let mut events = live.journal().to_vec();
        events[1].ops_applied.pop();
        let err = journal_replay(&events, BeliefConfig::default()).unwrap_err();
        assert!(matches!(err, JournalError::Divergence { seq: 2, .. }));

        let mut events = live.journal().to_vec();
        events[2].schema_version = 99;
        assert!(matches!(
            journal_replay(&events, BeliefConfig::default()),
            Err(JournalError::SchemaVersion { seq: 3, found: 99 })
        ));
    }
}
