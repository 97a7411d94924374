//! Shared fixtures and independent oracles for the integration tests.
//!
//! Oracles here deliberately avoid the library's bank, merge and ranking code
//! so that agreement with them is evidence rather than tautology.

#![allow(dead_code)]

use std::collections::BTreeSet;

use beliefmem::{MemoryBank, Observation, RuleExtractor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUBJECTS: [&str; 6] = ["api x", "db", "cache", "user", "service y", "queue"];
pub const PREDICATES: [&str; 4] = ["status", "mode", "owner", "language"];
pub const HYPOTHESES: [&str; 7] = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta"];

/// Measured cosine floor of the hash embedder on seeded disjoint text pairs.
pub const EPSILON: f64 = 0.4714045207910318;

/// Random SVO observation with 0 to 3 lines, some flagging contradictions.
pub fn random_observation(rng: &mut ChaCha8Rng, id: String) -> Observation {
    let n = rng.random_range(0..=3);
    let lines: Vec<String> = (0..n)
        .map(|_| {
            let s = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
            let p = PREDICATES[rng.random_range(0..PREDICATES.len())];
            let h = HYPOTHESES[rng.random_range(0..HYPOTHESES.len())];
            let prob: f64 = rng.random_range(0.0..=1.0);
            let contradicts = if rng.random_bool(0.25) {
                let t = HYPOTHESES[rng.random_range(0..HYPOTHESES.len())];
                format!("!{t}")
            } else {
                String::new()
            };
            format!("{s} | {p} | {h} | {prob} | | {contradicts}")
        })
        .collect();
    Observation::structured(id, "", lines)
}

pub fn random_observations(seed: u64, n: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| random_observation(&mut rng, format!("r{seed}-{i}")))
        .collect()
}

pub fn bank_from(observations: &[Observation]) -> MemoryBank {
    let mut bank = MemoryBank::default();
    for obs in observations {
        bank.ingest(obs.clone(), &RuleExtractor).expect("rule extraction succeeds");
    }
    bank
}

pub fn random_bank(seed: u64, n: usize) -> MemoryBank {
    bank_from(&random_observations(seed, n))
}

/// Plain-arithmetic noisy-OR with the cap, written from the definition.
pub fn oracle_merge(p: f64, delta: f64) -> f64 {
    (1.0 - (1.0 - p) * (1.0 - delta)).min(0.99)
}

// ---------------------------------------------------------------------------
// Similarity recomputed without the library's retrieval module.

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hybrid similarity of `query` against an attribute's slot text and
/// hypotheses. Vectors come from the embedder; everything else is local.
pub fn oracle_similarity(query: &str, slot_text: &str, hypotheses: &[&str]) -> f64 {
    let embed = |t: &str| beliefmem::retrieval::deterministic_embed(t, 256).unwrap();
    let entry_text = std::iter::once(slot_text)
        .chain(hypotheses.iter().copied())
        .collect::<Vec<_>>()
        .join(" ");
    let qv = embed(query);
    let ev = embed(&entry_text);
    let (qn, en) = (dot(qv.components(), qv.components()).sqrt(), dot(ev.components(), ev.components()).sqrt());
    let cos = if qn == 0.0 || en == 0.0 {
        0.0
    } else {
        dot(qv.components(), ev.components()) / (qn * en)
    };
    let qt = tokens(query);
    let lex_attr = jaccard(&qt, &tokens(slot_text));
    let lex_hyp = jaccard(&qt, &tokens(&hypotheses.join(" ")));
    0.7 * cos.max(0.0) + 0.3 * (lex_attr + lex_hyp) / 2.0
}

// ---------------------------------------------------------------------------
// Convergence oracle: the same generative model simulated directly on
// numbers, with its own seeds.

pub const CONVERGENCE_ORACLE_REPS: u64 = 50;
pub const CONVERGENCE_ORACLE_SEED_BASE: u64 = 10_000;
/// Frozen mean final top-1 rate of belief memory over the oracle's 50 runs.
pub const CONVERGENCE_ORACLE_BELIEF_FINAL: f64 = 1.0;
/// Frozen oracle means for the frequency baseline and belief after round 5.
pub const CONVERGENCE_ORACLE_FREQUENCY_FINAL: f64 = 0.5434;
pub const CONVERGENCE_ORACLE_BELIEF_AT_5: f64 = 0.9802;
/// Tolerance for a single-seed run against the frozen oracle mean.
pub const CONVERGENCE_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceOracleRun {
    pub belief_final: f64,
    pub belief_at_5: f64,
    pub frequency_final: f64,
}

/// 200 attributes, 3 candidates, 20 rounds; true support with chance 0.7 and
/// strength in [0.5, 0.9]; noise support with chance 0.6 and strength in
/// [0, 0.15]. A hit needs the truth strictly ahead of every rival.
pub fn convergence_oracle_run(seed: u64) -> ConvergenceOracleRun {
    const ATTRS: usize = 200;
    const CANDS: usize = 3;
    const ROUNDS: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<usize> = (0..ATTRS).map(|_| rng.random_range(0..CANDS)).collect();
    let mut belief = vec![[None::<f64>; CANDS]; ATTRS];
    let mut counts = vec![[0u32; CANDS]; ATTRS];
    let mut at_5 = 0.0;
    for round in 0..ROUNDS {
        for a in 0..ATTRS {
            for j in 0..CANDS {
                let (q, lo, hi) = if j == truth[a] { (0.7, 0.5, 0.9) } else { (0.6, 0.0, 0.15) };
                if rng.random::<f64>() < q {
                    let d: f64 = rng.random_range(lo..=hi);
                    belief[a][j] = Some(match belief[a][j] {
                        None => d.clamp(0.7, 0.9),
                        Some(p) => oracle_merge(p, d),
                    });
                    counts[a][j] += 1;
                }
            }
        }
        if round == 4 {
            at_5 = belief_rate(&belief, &truth);
        }
    }
    let freq_hits = (0..ATTRS)
        .filter(|&a| {
            let t = counts[a][truth[a]];
            t > 0 && (0..CANDS).all(|j| j == truth[a] || counts[a][j] < t)
        })
        .count();
    ConvergenceOracleRun {
        belief_final: belief_rate(&belief, &truth),
        belief_at_5: at_5,
        frequency_final: freq_hits as f64 / ATTRS as f64,
    }
}

fn belief_rate(belief: &[[Option<f64>; 3]], truth: &[usize]) -> f64 {
    let hits = belief
        .iter()
        .zip(truth)
        .filter(|(b, &t)| match b[t] {
            None => false,
            Some(pt) => b.iter().enumerate().all(|(j, p)| j == t || p.is_none_or(|p| p < pt)),
        })
        .count();
    hits as f64 / truth.len() as f64
}

/// Mean over the oracle's repetitions.
pub fn convergence_oracle_mean() -> ConvergenceOracleRun {
    let runs: Vec<_> = (0..CONVERGENCE_ORACLE_REPS)
        .map(|i| convergence_oracle_run(CONVERGENCE_ORACLE_SEED_BASE + i))
        .collect();
    let n = runs.len() as f64;
    ConvergenceOracleRun {
        belief_final: runs.iter().map(|r| r.belief_final).sum::<f64>() / n,
        belief_at_5: runs.iter().map(|r| r.belief_at_5).sum::<f64>() / n,
        frequency_final: runs.iter().map(|r| r.frequency_final).sum::<f64>() / n,
    }
}

// ---------------------------------------------------------------------------
// Deterministic baseline oracle for the adversarial study. A last-write store
// ends on the correct action exactly when the final step is valid, so the
// expected rate is the share of orderings ending in a valid step.

pub fn det_enumeration_oracle(n_valid: usize, n_noisy: usize) -> (usize, f64) {
    let n = n_valid + n_noisy;
    let (mut total, mut ending_valid) = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_valid {
            continue;
        }
        total += 1;
        if mask & (1 << (n - 1)) != 0 {
            ending_valid += 1;
        }
    }
    (total, ending_valid as f64 / total as f64)
}

// ---------------------------------------------------------------------------
// Hand-built ten-step bank with a hand-computed probability table.

pub const TT_STEPS: [&[&str]; 10] = [
    &["db | primary | node a | 0.8 | |"],
    &[],
    &["db | primary | node a | 0.5 | |", "db | primary | node b | 0.6 | |"],
    &["cache | mode | lru | 0.75 | |"],
    &["db | primary | node c | 0.95 | | !node a,!node b"],
    &["db | primary | node b | 0.6 | |"],
    &[],
    &["db | primary | node c | 0.9 | |"],
    &["db | primary | node a | 0.8 | | !node c"],
    &["cache | mode | lru | 0.2 | |"],
];

/// `(attribute subject, hypothesis, probability at t = 0..=10)`.
pub const TT_TABLE: [(&str, &str, [Option<f64>; 11]); 4] = [
    ("db", "node a", [None, Some(0.8), Some(0.8), Some(0.9), Some(0.9), Some(0.25), Some(0.25), Some(0.25), Some(0.25), Some(0.85), Some(0.85)]),
    ("db", "node b", [None, None, None, Some(0.7), Some(0.7), Some(0.25), Some(0.7), Some(0.7), Some(0.7), Some(0.7), Some(0.7)]),
    ("db", "node c", [None, None, None, None, None, Some(0.9), Some(0.9), Some(0.9), Some(0.99), Some(0.25), Some(0.25)]),
    ("cache", "lru", [None, None, None, None, Some(0.75), Some(0.75), Some(0.75), Some(0.75), Some(0.75), Some(0.75), Some(0.8)]),
];

/// Steps at which each attribute was written.
pub const TT_TOUCHES: [(&str, &[u64]); 2] = [("db", &[1, 3, 5, 6, 8, 9]), ("cache", &[4, 10])];

pub fn time_travel_bank() -> MemoryBank {
    let mut bank = MemoryBank::default();
    for (i, lines) in TT_STEPS.iter().enumerate() {
        bank.ingest(
            Observation::structured(format!("tt{}", i + 1), "", lines.iter().copied()),
            &RuleExtractor,
        )
        .unwrap();
    }
    bank
}

pub fn tt_predicate(subject: &str) -> &'static str {
    if subject == "db" {
        "primary"
    } else {
        "mode"
    }
}

// ---------------------------------------------------------------------------
// Hand oracle for the API-timeout episode.

pub struct ScenarioRow {
    pub action: &'static str,
    pub outcome: &'static str,
    pub top: &'static str,
    /// Highest first; empty for the deterministic memory.
    pub beliefs: &'static [(&'static str, f64)],
}

const fn row(
    action: &'static str,
    outcome: &'static str,
    top: &'static str,
    beliefs: &'static [(&'static str, f64)],
) -> ScenarioRow {
    ScenarioRow {
        action,
        outcome,
        top,
        beliefs,
    }
}

const RECOVERED: &[(&str, f64)] = &[("operational", 0.99), ("failed", 0.25), ("rate limited", 0.25)];

pub const BELIEF_SCENARIO: [ScenarioRow; 8] = [
    row("call", "timeout", "failed", &[("failed", 0.7), ("rate limited", 0.7)]),
    row("call", "timeout", "failed", &[("failed", 0.91), ("rate limited", 0.88)]),
    row("call", "timeout", "failed", &[("failed", 0.973), ("rate limited", 0.952)]),
    row("retry", "success", "operational", &[("operational", 0.9), ("failed", 0.25), ("rate limited", 0.25)]),
    row("call", "success", "operational", RECOVERED),
    row("call", "success", "operational", RECOVERED),
    row("call", "success", "operational", RECOVERED),
    row("call", "success", "operational", RECOVERED),
];

pub const GREEDY_SCENARIO: [ScenarioRow; 8] = [
    row("call", "timeout", "failed", &[]),
    row("call", "timeout", "failed", &[]),
    row("call", "timeout", "failed", &[]),
    row("avoid", "skipped", "failed", &[]),
    row("avoid", "skipped", "failed", &[]),
    row("avoid", "skipped", "failed", &[]),
    row("avoid", "skipped", "failed", &[]),
    row("avoid", "skipped", "failed", &[]),
];

/// Compares a trace with a hand oracle. Returns the first mismatch.
pub fn check_scenario(trace: &beliefmem::harness::ScenarioTrace, oracle: &[ScenarioRow]) -> Result<(), String> {
    if trace.steps.len() != oracle.len() {
        return Err(format!("{} steps, expected {}", trace.steps.len(), oracle.len()));
    }
    for (step, want) in trace.steps.iter().zip(oracle) {
        let action = serde_json::to_value(step.action).unwrap();
        let outcome = serde_json::to_value(step.outcome).unwrap();
        if action != want.action || outcome != want.outcome || step.top.as_deref() != Some(want.top) {
            return Err(format!(
                "step {}: got {action} {outcome} {:?}, expected {} {} {}",
                step.step, step.top, want.action, want.outcome, want.top
            ));
        }
        let same = step.beliefs.len() == want.beliefs.len()
            && step
                .beliefs
                .iter()
                .zip(want.beliefs)
                .all(|((h, p), (wh, wp))| h == wh && (p - wp).abs() < 1e-12);
        if !same {
            return Err(format!("step {}: beliefs {:?}, expected {:?}", step.step, step.beliefs, want.beliefs));
        }
    }
    Ok(())
}
