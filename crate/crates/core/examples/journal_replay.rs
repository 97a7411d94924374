//! Persist a bank as a journal, then rebuild it from the journal alone and
//! from a snapshot plus the journal suffix. All three have the same digest.

use std::io::Cursor;

use beliefmem::bank::{journal_replay, read_journal, write_event};
use beliefmem::{BeliefConfig, MemoryBank, Observation, RuleExtractor};

fn main() {
    let mut bank = MemoryBank::default();
    let mut snapshot = None;
    for i in 0..12 {
        let line = format!("svc{} | mode | mode {} | 0.{} | |", i % 3, i % 2, 5 + i % 4);
        bank.ingest(Observation::structured(format!("o{i}"), "", [line]), &RuleExtractor)
            .unwrap();
        if i == 5 {
            snapshot = Some(bank.snapshot());
        }
    }

    let mut ndjson = Vec::new();
    for event in bank.journal() {
        write_event(&mut ndjson, event).unwrap();
    }
    println!("journal: {} events, {} bytes", bank.journal().len(), ndjson.len());

    let events = read_journal(Cursor::new(ndjson)).unwrap();
    let replayed = journal_replay(&events, BeliefConfig::default()).unwrap();
    let resumed = MemoryBank::from_snapshot_and_journal(snapshot.unwrap(), &events).unwrap();

    println!("live     {}", bank.digest());
    println!("replayed {}", replayed.digest());
    println!("resumed  {}", resumed.digest());
    assert_eq!(bank, replayed);
    assert_eq!(bank, resumed);
}
