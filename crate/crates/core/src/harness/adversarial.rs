//! Adversarial correction study. A flawed conclusion is injected with high
//! probability; valid steps support the correct one and contradict the flawed
//! one, noisy steps support wrong candidates. Measures how often, and how
//! fast, the correct candidate comes to stay above the flawed one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, MemoryKind};
use crate::bank::{AttributeKey, MemoryBank};
use crate::baselines::DeterministicMemory;
use crate::belief::BeliefConfig;
use crate::extraction::{rule_extract, Observation, RuleExtractor};
use crate::retrieval::{read, HashEmbedder, Query};

pub const FLAWED: &str = "flawed action";
pub const CORRECT: &str = "correct action";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub flawed_initial_p: f64,
    pub n_valid: usize,
    pub n_noisy: usize,
    pub n_steps: usize,
    pub valid_delta_range: [f64; 2],
    pub noisy_delta_range: [f64; 2],
    /// Chance a noisy step also flags the correct candidate as contradicted.
    pub noisy_contradiction_prob: f64,
    /// Wrong candidates other than the flawed one that noisy steps may support.
    pub n_distractors: usize,
    pub top_k: usize,
}

impl Default for AdversarialSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 102,
            flawed_initial_p: 0.9,
            n_valid: 5,
            n_noisy: 5,
            n_steps: 10,
            valid_delta_range: [0.5, 0.9],
            noisy_delta_range: [0.5, 0.9],
            noisy_contradiction_prob: 0.15,
            n_distractors: 2,
            top_k: 20,
        }
    }
}

impl AdversarialSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidSpec(m.to_owned()));
        if self.n_valid + self.n_noisy != self.n_steps {
            return bad("n_valid + n_noisy must equal n_steps");
        }
        if self.n_samples == 0 || self.n_steps == 0 || self.top_k == 0 {
            return bad("n_samples, n_steps and top_k must be at least 1");
        }
        if !(0.0 < self.flawed_initial_p && self.flawed_initial_p <= 1.0) {
            return bad("flawed_initial_p must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.noisy_contradiction_prob) {
            return bad("noisy_contradiction_prob must lie in [0, 1]");
        }
        for [lo, hi] in [self.valid_delta_range, self.noisy_delta_range] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad("delta ranges must satisfy 0 <= lo <= hi <= 1");
            }
        }
        Ok(())
    }

    fn attribute(&self, sample: usize) -> AttributeKey {
        AttributeKey::simple(&format!("task {sample}"), "action").expect("non-empty slots")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Valid,
    Noisy,
}

/// One sample's scripted observations: injection first, then the steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSample {
    pub index: usize,
    pub order: Vec<StepKind>,
    pub injection: Observation,
    pub steps: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub index: usize,
    pub order: Vec<StepKind>,
    /// Whether the correct candidate outranked the flawed one after each step.
    pub outranks: Vec<bool>,
    pub corrected: bool,
    /// 1-based step from which the correct candidate stays ahead to the end.
    pub correction_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMetrics {
    pub memory: MemoryKind,
    pub correction_rate: f64,
    /// Averaged over corrected samples; `None` if none were corrected.
    pub mean_correction_steps: Option<f64>,
    pub traces: Vec<SampleTrace>,
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn gen_adversarial_samples(spec: &AdversarialSpec) -> Result<Vec<AdversarialSample>, HarnessError> {
    spec.validate()?;
    let wrong: Vec<String> = std::iter::once(FLAWED.to_owned())
        .chain((1..=spec.n_distractors).map(|d| format!("distractor {d}")))
        .collect();
    let mut samples = Vec::with_capacity(spec.n_samples);
    for index in 0..spec.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64);
        let subject = format!("task {index}");
        let mut order: Vec<StepKind> = std::iter::repeat_n(StepKind::Valid, spec.n_valid)
            .chain(std::iter::repeat_n(StepKind::Noisy, spec.n_noisy))
            .collect();
        order.shuffle(&mut rng);
        let steps = order
            .iter()
            .enumerate()
            .map(|(s, kind)| {
                let line = match kind {
                    StepKind::Valid => {
                        let d = uniform(&mut rng, spec.valid_delta_range);
                        format!("{subject} | action | {CORRECT} | {d} | | !{FLAWED}")
                    }
                    StepKind::Noisy => {
                        let target = &wrong[rng.random_range(0..wrong.len())];
                        let d = uniform(&mut rng, spec.noisy_delta_range);
                        let flag = if rng.random_bool(spec.noisy_contradiction_prob) {
                            format!("!{CORRECT}")
                        } else {
                            String::new()
                        };
                        format!("{subject} | action | {target} | {d} | | {flag}")
                    }
                };
                Observation::structured(format!("adv-{}-{index}-s{}", spec.seed, s + 1), "", [line])
            })
            .collect();
        let injection = Observation::structured(
            format!("adv-{}-{index}-inject", spec.seed),
            "",
            [format!("{subject} | action | {FLAWED} | {} | |", spec.flawed_initial_p)],
        );
        samples.push(AdversarialSample {
            index,
            order,
            injection,
            steps,
        });
    }
    Ok(samples)
}

/// Correction outcome for a sequence of per-step outrank flags.
pub fn correction_of(outranks: &[bool]) -> (bool, Option<usize>) {
    let corrected = outranks.last().copied().unwrap_or(false);
    if !corrected {
        return (false, None);
    }
    let first_stable = outranks.iter().rposition(|&o| !o).map_or(0, |i| i + 1);
    (true, Some(first_stable + 1))
}

pub fn run_adversarial(spec: &AdversarialSpec, memory: MemoryKind) -> Result<CorrectionMetrics, HarnessError> {
    let samples = gen_adversarial_samples(spec)?;
    let embedder = HashEmbedder::default();
    let mut traces = Vec::with_capacity(samples.len());
    for sample in samples {
        let key = spec.attribute(sample.index);
        let query_text = key.slot_text();
        let mut outranks = Vec::with_capacity(sample.steps.len());
        match memory {
            MemoryKind::Belief => {
                let cfg = BeliefConfig {
                    top_k: spec.top_k,
                    ..BeliefConfig::default()
                };
                let mut bank = MemoryBank::new(cfg)?;
                bank.ingest(sample.injection.clone(), &RuleExtractor)?;
                for obs in &sample.steps {
                    bank.ingest(obs.clone(), &RuleExtractor)?;
                    let result = read(&bank, &Query::new(&query_text, bank.config()), &embedder)?;
                    outranks.push(belief_outranks(&result.entries, &key));
                }
            }
            MemoryKind::Deterministic => {
                let mut det = DeterministicMemory::new(BeliefConfig::default());
                det.observe(&rule_extract(&sample.injection)?);
                for obs in &sample.steps {
                    det.observe(&rule_extract(obs)?);
                    let hits = det.det_read(&query_text, spec.top_k, &embedder)?;
                    outranks.push(
                        hits.iter()
                            .any(|h| h.attribute == key && h.conclusion == CORRECT),
                    );
                }
            }
            MemoryKind::Frequency => {
                return Err(HarnessError::InvalidSpec(
                    "adversarial runs compare belief and deterministic memories".into(),
                ))
            }
        }
        let (corrected, correction_step) = correction_of(&outranks);
        traces.push(SampleTrace {
            index: sample.index,
            order: sample.order,
            outranks,
            corrected,
            correction_step,
        });
    }
    let corrected: Vec<usize> = traces.iter().filter_map(|t| t.correction_step).collect();
    Ok(CorrectionMetrics {
        memory,
        correction_rate: corrected.len() as f64 / traces.len() as f64,
        mean_correction_steps: (!corrected.is_empty())
            .then(|| corrected.iter().sum::<usize>() as f64 / corrected.len() as f64),
        traces,
    })
}

/// The correct candidate is among the returned candidates of the entry and
/// strictly above the flawed one, or the flawed one was capped away.
fn belief_outranks(entries: &[crate::retrieval::ScoredEntry], key: &AttributeKey) -> bool {
    let Some(entry) = entries.iter().find(|e| &e.attribute == key) else {
        return false;
    };
    let Some(correct) = entry.candidates.iter().find(|c| c.hypothesis == CORRECT) else {
        return false;
    };
    entry
        .candidates
        .iter()
        .find(|c| c.hypothesis == FLAWED)
        .is_none_or(|f| correct.probability.get() > f.probability.get())
}
