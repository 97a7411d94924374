//! Synthetic convergence study: many attributes, one true candidate each,
//! noisy evidence streams. Measures how often the true candidate holds
//! strictly the highest confidence as evidence accumulates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, MemoryKind};
use crate::bank::{AttributeKey, MemoryBank};
use crate::baselines::FrequencyMemory;
use crate::belief::BeliefConfig;
use crate::extraction::{rule_extract, Observation, RuleExtractor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub seed: u64,
    pub n_attributes: usize,
    pub n_candidates_per_attr: usize,
    /// Observation rounds; every attribute receives one bundle per round.
    pub n_observations: usize,
    pub q_true: f64,
    /// Chance, per noise candidate and round, of a supporting record.
    pub q_noise: f64,
    pub delta_range: [f64; 2],
    /// Strength range for noise support. Weak but frequent noise is what
    /// separates noisy-OR from counting.
    pub noise_delta_range: [f64; 2],
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_attributes: 200,
            n_candidates_per_attr: 3,
            n_observations: 20,
            q_true: 0.7,
            q_noise: 0.6,
            delta_range: [0.5, 0.9],
            noise_delta_range: [0.0, 0.15],
        }
    }
}

impl ConvergenceSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidSpec(m.to_owned()));
        if self.n_attributes == 0 {
            return bad("n_attributes must be at least 1");
        }
        if self.n_candidates_per_attr == 0 {
            return bad("n_candidates_per_attr must be at least 1");
        }
        for (name, q) in [("q_true", self.q_true), ("q_noise", self.q_noise)] {
            if !(0.0..=1.0).contains(&q) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, [lo, hi]) in [
            ("delta_range", self.delta_range),
            ("noise_delta_range", self.noise_delta_range),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(&format!("{name} must satisfy 0 <= lo <= hi <= 1"));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, a: usize) -> AttributeKey {
        AttributeKey::simple(&format!("attr {a}"), "value").expect("non-empty slots")
    }
}

pub fn candidate_name(j: usize) -> String {
    format!("value {j}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStream {
    /// Round-major: round 0 for every attribute, then round 1, and so on.
    pub observations: Vec<Observation>,
    /// True candidate name per attribute index.
    pub truth: Vec<String>,
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn gen_convergence_stream(spec: &ConvergenceSpec) -> Result<ConvergenceStream, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth_idx: Vec<usize> = (0..spec.n_attributes)
        .map(|_| rng.random_range(0..spec.n_candidates_per_attr))
        .collect();
    let mut observations = Vec::with_capacity(spec.n_attributes * spec.n_observations);
    for round in 0..spec.n_observations {
        for (a, &true_j) in truth_idx.iter().enumerate() {
            let mut lines = Vec::new();
            for j in 0..spec.n_candidates_per_attr {
                let (q, range) = if j == true_j {
                    (spec.q_true, spec.delta_range)
                } else {
                    (spec.q_noise, spec.noise_delta_range)
                };
                if rng.random_bool(q) {
                    let delta = uniform(&mut rng, range);
                    lines.push(format!("attr {a} | value | {} | {delta} | |", candidate_name(j)));
                }
            }
            observations.push(Observation::structured(
                format!("conv-{}-r{round}-a{a}", spec.seed),
                "",
                lines,
            ));
        }
    }
    Ok(ConvergenceStream {
        observations,
        truth: truth_idx.into_iter().map(candidate_name).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOutcome {
    pub memory: MemoryKind,
    /// Top-1 rate after each round.
    pub curve: Vec<f64>,
    pub final_rate: f64,
}

pub fn run_convergence(spec: &ConvergenceSpec, memory: MemoryKind) -> Result<ConvergenceOutcome, HarnessError> {
    let stream = gen_convergence_stream(spec)?;
    let keys: Vec<AttributeKey> = (0..spec.n_attributes).map(|a| spec.attribute(a)).collect();
    let mut curve = Vec::with_capacity(spec.n_observations);
    match memory {
        MemoryKind::Belief => {
            let mut bank = MemoryBank::new(BeliefConfig::default())?;
            for round in stream.observations.chunks(spec.n_attributes) {
                for obs in round {
                    bank.ingest(obs.clone(), &RuleExtractor)?;
                }
                curve.push(top1_rate(&keys, &stream.truth, |k, truth| belief_top1(&bank, k, truth)));
            }
        }
        MemoryKind::Frequency => {
            let mut freq = FrequencyMemory::default();
            for round in stream.observations.chunks(spec.n_attributes) {
                for obs in round {
                    freq.observe(&rule_extract(obs)?);
                }
                curve.push(top1_rate(&keys, &stream.truth, |k, truth| {
                    freq.entry(k).and_then(|e| e.strict_top1()) == Some(truth)
                }));
            }
        }
        MemoryKind::Deterministic => {
            return Err(HarnessError::InvalidSpec(
                "convergence compares belief and frequency memories".into(),
            ))
        }
    }
    Ok(ConvergenceOutcome {
        memory,
        final_rate: curve.last().copied().unwrap_or(0.0),
        curve,
    })
}

fn top1_rate(keys: &[AttributeKey], truth: &[String], hit: impl Fn(&AttributeKey, &str) -> bool) -> f64 {
    let hits = keys.iter().zip(truth).filter(|(k, t)| hit(k, t)).count();
    hits as f64 / keys.len() as f64
}

/// True candidate strictly above every other active candidate.
pub fn belief_top1(bank: &MemoryBank, key: &AttributeKey, truth: &str) -> bool {
    let Some(entry) = bank.entry(key) else {
        return false;
    };
    let Some(t) = entry.active_candidate(truth) else {
        return false;
    };
    entry
        .active()
        .filter(|c| c.hypothesis != truth)
        .all(|c| c.probability.get() < t.probability.get())
}
