//! Version history: every overwritten probability stays queryable at the
//! logical time it was current.

use beliefmem::{read, read_at, HashEmbedder, MemoryBank, Observation, Query, RuleExtractor};

fn main() {
    let mut bank = MemoryBank::default();
    let script: [&[&str]; 5] = [
        &["cache | policy | lru | 0.8"],
        &[],
        &["cache | policy | lru | 0.5", "cache | policy | lfu | 0.7"],
        &["cache | policy | arc | 0.9 | | !lru,!lfu"],
        &["cache | policy | arc | 0.6"],
    ];
    for (i, lines) in script.iter().enumerate() {
        bank.ingest(Observation::structured(format!("o{}", i + 1), "", lines.iter().copied()), &RuleExtractor)
            .unwrap();
    }

    let embedder = HashEmbedder::default();
    let query = Query::new("cache policy", bank.config());
    for t in 0..=bank.logical_clock() {
        let result = read_at(&bank, &query, t, &embedder).unwrap();
        let view: Vec<String> = result
            .entries
            .iter()
            .flat_map(|e| &e.candidates)
            .map(|c| format!("{}={:.6}", c.hypothesis, c.probability.get()))
            .collect();
        println!("t={t}: {}", view.join(" "));
    }
    let now = read(&bank, &query, &embedder).unwrap();
    println!("current top: {}", now.entries[0].candidates[0].hypothesis);
}
