//! Comparison memories without belief state: a single-conclusion store that
//! overwrites on contrary evidence, and a frequency-count store.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bank::{match_key, AttributeKey, LogicalTime};
use crate::belief::{decay_weight, BeliefConfig};
use crate::extraction::ExtractedMemory;
use crate::retrieval::{Embedder, PreparedQuery, RetrievalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetEntry {
    pub attribute: AttributeKey,
    pub conclusion: String,
    pub last_updated_at: LogicalTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetHit {
    pub attribute: AttributeKey,
    pub conclusion: String,
    pub score: f64,
    pub tau_at_query: u64,
}

/// One conclusion per attribute, replaced whenever new evidence names a
/// different one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeterministicMemory {
    config: BeliefConfig,
    entries: BTreeMap<AttributeKey, DetEntry>,
    clock: LogicalTime,
}

impl DeterministicMemory {
    pub fn new(config: BeliefConfig) -> Self {
        Self {
            config,
            entries: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn clock(&self) -> LogicalTime {
        self.clock
    }

    pub fn conclusion(&self, key: &AttributeKey) -> Option<&str> {
        self.entries.get(key).map(|e| e.conclusion.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = &DetEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes one item at the current clock. Probabilities and contradiction
    /// flags are ignored; confirming evidence only refreshes the timestamp.
    pub fn det_ingest(&mut self, item: &ExtractedMemory) {
        let key = match_key(self.entries.keys(), item, self.config.match_threshold)
            .unwrap_or_else(|| item.attribute_key());
        let now = self.clock;
        let entry = self.entries.entry(key.clone()).or_insert_with(|| DetEntry {
            attribute: key,
            conclusion: String::new(),
            last_updated_at: now,
        });
        entry.conclusion = item.hypothesis();
        entry.last_updated_at = now;
    }

    /// Applies one observation: advances the clock, then per attribute keeps
    /// the most probable item (first on ties) as the new conclusion.
    pub fn observe(&mut self, items: &[ExtractedMemory]) {
        self.clock += 1;
        let mut best: BTreeMap<AttributeKey, &ExtractedMemory> = BTreeMap::new();
        for item in items {
            let key = match_key(self.entries.keys(), item, self.config.match_threshold)
                .unwrap_or_else(|| item.attribute_key());
            match best.get(&key) {
                Some(b) if b.prob >= item.prob => {}
                _ => {
                    best.insert(key, item);
                }
            }
        }
        for item in best.into_values() {
            self.det_ingest(item);
        }
    }

    /// Ranks entries by `hybrid_sim · λ^τ` like the belief read, one
    /// conclusion each.
    pub fn det_read(
        &self,
        query_text: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<DetHit>, RetrievalError> {
        let prepared = PreparedQuery::new(query_text, embedder)?;
        let mut hits = Vec::with_capacity(self.entries.len());
        for entry in self.entries.values() {
            let sim = prepared.similarity(&entry.attribute, &[&entry.conclusion], embedder, &self.config)?;
            let tau = self.clock - entry.last_updated_at;
            hits.push((
                entry.last_updated_at,
                DetHit {
                    attribute: entry.attribute.clone(),
                    conclusion: entry.conclusion.clone(),
                    score: sim * decay_weight(self.config.decay_rate, tau),
                    tau_at_query: tau,
                },
            ));
        }
        hits.sort_by(|(ta, a), (tb, b)| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| tb.cmp(ta))
                .then_with(|| a.attribute.to_string().cmp(&b.attribute.to_string()))
        });
        Ok(hits.into_iter().take(k).map(|(_, h)| h).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqEntry {
    pub counts: BTreeMap<String, u64>,
}

impl FreqEntry {
    pub fn freq_update(&mut self, supported: &str) {
        *self.counts.entry(supported.to_owned()).or_default() += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn confidence(&self, hypothesis: &str) -> f64 {
        let total = self.total();
        match self.counts.get(hypothesis) {
            Some(&c) if total > 0 => c as f64 / total as f64,
            _ => 0.0,
        }
    }

    pub fn confidences(&self) -> BTreeMap<&str, f64> {
        self.counts
            .keys()
            .map(|h| (h.as_str(), self.confidence(h)))
            .collect()
    }

    /// Highest count; ties go to the lexicographically smallest hypothesis.
    pub fn top1(&self) -> Option<&str> {
        // BTreeMap iterates in key order, so strict `>` keeps the smallest on ties
        let mut best: Option<(&str, u64)> = None;
        for (h, &c) in &self.counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((h, c));
            }
        }
        best.map(|(h, _)| h)
    }

    /// The hypothesis with strictly the highest count, `None` on a tie.
    pub fn strict_top1(&self) -> Option<&str> {
        let top = self.top1()?;
        let c = self.counts[top];
        (self.counts.values().filter(|&&x| x == c).count() == 1).then_some(top)
    }
}

/// Per-attribute frequency counts, keyed exactly by attribute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMemory {
    entries: BTreeMap<AttributeKey, FreqEntry>,
}

impl FrequencyMemory {
    pub fn observe(&mut self, items: &[ExtractedMemory]) {
        for item in items {
            self.entries
                .entry(item.attribute_key())
                .or_default()
                .freq_update(&item.hypothesis());
        }
    }

    pub fn entry(&self, key: &AttributeKey) -> Option<&FreqEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{rule_extract, Observation};
    use crate::retrieval::HashEmbedder;

    fn items(lines: &[&str]) -> Vec<ExtractedMemory> {
        rule_extract(&Observation::structured("o", "", lines.iter().copied())).unwrap()
    }

    fn key() -> AttributeKey {
        AttributeKey::simple("api x", "status").unwrap()
    }

    #[test]
    fn overwrite_and_flip_back() {
        let mut det = DeterministicMemory::default();
        let mut seen = Vec::new();
        for h in ["failed", "operational", "failed"] {
            det.observe(&items(&[&format!("api_x | status | {h} | 0.8")]));
            seen.push(det.conclusion(&key()).unwrap().to_owned());
        }
        assert_eq!(seen, ["failed", "operational", "failed"]);
        assert_eq!(det.len(), 1);
    }

    #[test]
    fn argmax_within_observation() {
        let mut det = DeterministicMemory::default();
        det.observe(&items(&[
            "api_x | status | rate limited | 0.6",
            "api_x | status | failed | 0.7",
        ]));
        assert_eq!(det.conclusion(&key()), Some("failed"));
    }

    #[test]
    fn alternating_evidence_alternates() {
        let mut det = DeterministicMemory::default();
        let mut flips = 0;
        let mut prev = None;
        for i in 0..10 {
            let h = if i % 2 == 0 { "a" } else { "b" };
            det.observe(&items(&[&format!("svc | mode | {h} | 0.9")]));
            let now = det.conclusion(&AttributeKey::simple("svc", "mode").unwrap()).map(str::to_owned);
            if prev.is_some() && prev != now {
                flips += 1;
            }
            prev = now;
        }
        assert_eq!(flips, 9);
    }

    #[test]
    fn det_read_ranks_and_truncates() {
        let mut det = DeterministicMemory::default();
        let e = HashEmbedder::default();
        assert!(det.det_read("x", 5, &e).unwrap().is_empty());
        det.observe(&items(&["api_x | status | failed | 0.8"]));
        det.observe(&items(&["weather | forecast | sunny | 0.8"]));
        let hits = det.det_read("api x status", 5, &e).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].attribute, key());
        assert_eq!(hits[0].tau_at_query, 1);
        assert!(hits[0].score >= hits[1].score);
        assert_eq!(det.det_read("api x status", 1, &e).unwrap().len(), 1);
    }

    #[test]
    fn frequency_confidences() {
        let mut f = FreqEntry::default();
        f.freq_update("failed");
        assert_eq!(f.confidence("failed"), 1.0);
        let mut f = FreqEntry::default();
        for h in ["failed", "failed", "failed", "op", "op"] {
            f.freq_update(h);
        }
        assert_eq!(f.confidence("op"), 0.4);
        assert!((f.confidences().values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(f.top1(), Some("failed"));
        let mut tie = FreqEntry::default();
        tie.freq_update("zeta");
        tie.freq_update("alpha");
        assert_eq!(tie.top1(), Some("alpha"));
        assert_eq!(tie.strict_top1(), None);
        assert_eq!(FreqEntry::default().top1(), None);
    }
}
