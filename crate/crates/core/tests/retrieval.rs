//! Retrieval properties: similarity floor for unrelated text, cap behaviour,
//! ordering and agreement between current and historical reads.

mod common;

use beliefmem::retrieval::{combine_similarity, deterministic_embed, hybrid_sim};
use beliefmem::{read, read_at, BeliefConfig, HashEmbedder, MemoryBank, Observation, Query, RuleExtractor};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(4..9);
    (0..n).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect()
}

/// The seeded corpus the embedder's cosine floor was measured on.
fn disjoint_pairs() -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pairs = Vec::with_capacity(1000);
    while pairs.len() < 1000 {
        let a: Vec<String> = (0..rng.random_range(2..7)).map(|_| word(&mut rng)).collect();
        let b: Vec<String> = (0..rng.random_range(2..7)).map(|_| word(&mut rng)).collect();
        if a.iter().any(|w| b.contains(w)) {
            continue;
        }
        pairs.push((a.join(" "), b.join(" ")));
    }
    pairs
}

#[test]
fn unrelated_text_stays_below_the_floor() {
    let cfg = BeliefConfig::default();
    let mut max = 0.0f64;
    for (a, b) in disjoint_pairs() {
        let cos = deterministic_embed(&a, 256).unwrap().cosine(&deterministic_embed(&b, 256).unwrap());
        max = max.max(cos);
        assert!(combine_similarity(cos, 0.0, 0.0, &cfg) <= 0.7 * EPSILON + 1e-15);
    }
    assert_eq!(max, EPSILON);
}

#[test]
fn unrelated_entry_similarity_bounded() {
    let mut bank = MemoryBank::default();
    bank.ingest(
        Observation::structured("o1", "", ["quartz | hue | violet | 0.8"]),
        &RuleExtractor,
    )
    .unwrap();
    let entry = bank.entries().next().unwrap();
    let sim = hybrid_sim("railway timetable", entry, &HashEmbedder::default(), bank.config()).unwrap();
    assert!(sim <= 0.7 * EPSILON, "{sim}");
}

#[test]
fn shared_tokens_raise_similarity() {
    let bank = random_bank(3, 40);
    let embedder = HashEmbedder::default();
    for entry in bank.entries() {
        let own = entry.attribute.slot_text();
        let sim_own = hybrid_sim(&own, entry, &embedder, bank.config()).unwrap();
        let sim_other = hybrid_sim("railway timetable", entry, &embedder, bank.config()).unwrap();
        assert!(sim_own > sim_other, "{own}: {sim_own} vs {sim_other}");
    }
}

#[test]
fn raising_the_cap_only_appends_candidates() {
    let embedder = HashEmbedder::default();
    for seed in 0..50 {
        let bank = random_bank(2000 + seed, 60);
        let mut previous: Option<beliefmem::RetrievalResult> = None;
        for cap in 1..=6 {
            let q = Query::new("api x status alpha", bank.config()).with_max_candidates(cap);
            let r = read(&bank, &q, &embedder).unwrap();
            if let Some(prev) = &previous {
                assert_eq!(prev.entries.len(), r.entries.len());
                for (a, b) in prev.entries.iter().zip(&r.entries) {
                    assert_eq!(a.attribute, b.attribute);
                    assert_eq!(a.score, b.score);
                    assert_eq!(a.candidates[..], b.candidates[..a.candidates.len()]);
                }
            }
            previous = Some(r);
        }
    }
}

#[test]
fn reads_do_not_mutate() {
    let bank = random_bank(9, 50);
    let before = bank.snapshot().to_canonical_string();
    let embedder = HashEmbedder::default();
    for t in 0..=bank.logical_clock() {
        read_at(&bank, &Query::new("db mode", bank.config()), t, &embedder).unwrap();
    }
    read(&bank, &Query::new("db mode", bank.config()), &embedder).unwrap();
    assert_eq!(before, bank.snapshot().to_canonical_string());
}

#[test]
fn ties_break_on_recency_then_key() {
    let mut bank = MemoryBank::default();
    for (id, line) in [("o1", "aaa | bbb | ccc | 0.8"), ("o2", "ddd | eee | fff | 0.8")] {
        bank.ingest(Observation::structured(id, "", [line]), &RuleExtractor).unwrap();
    }
    let embedder = HashEmbedder::default();
    let r = read(&bank, &Query::new("zzz", bank.config()), &embedder).unwrap();
    // both scores are zero; the fresher entry wins the tie
    assert_eq!(r.entries[0].score, 0.0);
    assert_eq!(r.entries[0].attribute.subject(), "ddd");
    let r = read_at(&bank, &Query::new("zzz", bank.config()), 1, &embedder).unwrap();
    assert_eq!(r.entries.len(), 1);
    assert_eq!(r.entries[0].attribute.subject(), "aaa");
}

#[test]
fn historical_reads_only_see_the_past() {
    let observations = random_observations(77, 40);
    let full = bank_from(&observations);
    let embedder = HashEmbedder::default();
    for t in 0..=full.logical_clock() {
        let prefix = bank_from(&observations[..t as usize]);
        let q = Query::new("user status beta", full.config()).with_k(50).with_max_candidates(10);
        let past = read_at(&full, &q, t, &embedder).unwrap();
        let then = read(&prefix, &q, &embedder).unwrap();
        assert_eq!(past.entries.len(), then.entries.len(), "t={t}");
        for (a, b) in past.entries.iter().zip(&then.entries) {
            assert_eq!(a.attribute, b.attribute, "t={t}");
            assert_eq!(a.tau_at_query, b.tau_at_query, "t={t}");
            assert!((a.score - b.score).abs() < 1e-12, "t={t}");
            let pa: Vec<_> = a.candidates.iter().map(|c| (&c.hypothesis, c.probability)).collect();
            let pb: Vec<_> = b.candidates.iter().map(|c| (&c.hypothesis, c.probability)).collect();
            assert_eq!(pa, pb, "t={t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn read_contracts(seed in 0u64..10_000, n in 1usize..40, k in 1usize..12, cap in 1usize..6, qi in 0usize..4) {
        let bank = random_bank(seed, n);
        let text = ["api x status", "cache mode gamma", "owner", "nothing matches here"][qi];
        let q = Query::new(text, bank.config()).with_k(k).with_max_candidates(cap);
        let embedder = HashEmbedder::default();
        let r = read(&bank, &q, &embedder).unwrap();
        prop_assert_eq!(r.entries.len(), k.min(bank.len()));
        for w in r.entries.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for e in &r.entries {
            prop_assert!(e.candidates.len() <= cap);
            prop_assert!(e.similarity >= 0.0 && e.similarity <= 1.0 + 1e-12);
            prop_assert!((e.score - e.similarity * 0.5f64.powi(e.tau_at_query as i32)).abs() < 1e-12);
        }
        let at = read_at(&bank, &q, bank.logical_clock(), &embedder).unwrap();
        prop_assert_eq!(at.entries, r.entries);
    }
}
