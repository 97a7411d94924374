//! Probability arithmetic for belief updates.
//!
//! Candidate probabilities are evidence-based confidence scores, not posteriors:
//! candidates under one attribute are never normalized against each other.
//! Every function here is pure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound applied after every merge. No candidate is ever stored as certain.
pub const PROBABILITY_CAP: f64 = 0.99;

/// Value a contradicted candidate is reset to.
pub const CONTRADICTION_VALUE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("probability {0} outside (0, 0.99]")]
    ProbabilityOutOfRange(f64),
    #[error("evidence strength {0} outside [0, 1]")]
    EvidenceOutOfRange(f64),
    #[error("extracted probability {0} outside [0, 1]")]
    RawProbabilityOutOfRange(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// A stored candidate probability, always in `(0, 0.99]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const CAP: Probability = Probability(PROBABILITY_CAP);

    pub fn new(value: f64) -> Result<Self, BeliefError> {
        if value > 0.0 && value <= PROBABILITY_CAP {
            Ok(Self(value))
        } else {
            Err(BeliefError::ProbabilityOutOfRange(value))
        }
    }

    #[inline]
    pub const fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = BeliefError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// How strongly one observation supports a hypothesis, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EvidenceStrength(f64);

impl EvidenceStrength {
    pub const NONE: EvidenceStrength = EvidenceStrength(0.0);

    pub fn new(value: f64) -> Result<Self, BeliefError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(BeliefError::EvidenceOutOfRange(value))
        }
    }

    #[inline]
    pub const fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for EvidenceStrength {
    type Error = BeliefError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EvidenceStrength> for f64 {
    fn from(d: EvidenceStrength) -> f64 {
        d.0
    }
}

/// How contradictions are detected during ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContradictionMode {
    /// Only hypotheses an extracted memory explicitly names as contradicted are downgraded.
    #[default]
    Flagged,
    /// Every active sibling of a supported candidate that the same observation
    /// does not also support is downgraded.
    Strict,
}

impl std::str::FromStr for ContradictionMode {
    type Err = BeliefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flagged" => Ok(Self::Flagged),
            "strict" => Ok(Self::Strict),
            other => Err(BeliefError::InvalidConfig(format!(
                "unknown contradiction mode `{other}`"
            ))),
        }
    }
}

/// Engine hyperparameters. Defaults reproduce the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeliefConfig {
    /// Lower clip bound for newly added candidates.
    pub p_min: f64,
    /// Upper clip bound for newly added candidates.
    pub p_max: f64,
    /// Merge cap. Fixed at 0.99; present so configs can state it explicitly.
    pub cap: f64,
    pub contradiction_value: f64,
    /// Per-step retrieval decay `λ` in `(0, 1]`.
    pub decay_rate: f64,
    pub sim_weight_embed: f64,
    pub sim_weight_lexical: f64,
    pub top_k: usize,
    /// Retrieval-side cap on candidates exposed per attribute.
    pub max_candidates_per_attribute: usize,
    pub contradiction_mode: ContradictionMode,
    pub embed_dim: usize,
    /// Minimum slot Jaccard for the fuzzy attribute match.
    pub match_threshold: f64,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self {
            p_min: 0.7,
            p_max: 0.9,
            cap: PROBABILITY_CAP,
            contradiction_value: CONTRADICTION_VALUE,
            decay_rate: 0.5,
            sim_weight_embed: 0.7,
            sim_weight_lexical: 0.3,
            top_k: 20,
            max_candidates_per_attribute: 4,
            contradiction_mode: ContradictionMode::Flagged,
            embed_dim: 256,
            match_threshold: 0.6,
        }
    }
}

impl BeliefConfig {
    pub fn validate(&self) -> Result<(), BeliefError> {
        let bad = |msg: String| Err(BeliefError::InvalidConfig(msg));
        if self.cap != PROBABILITY_CAP {
            return bad(format!("cap must be {PROBABILITY_CAP}, got {}", self.cap));
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max && self.p_max < self.cap) {
            return bad(format!(
                "need 0 < p_min <= p_max < cap, got p_min={} p_max={}",
                self.p_min, self.p_max
            ));
        }
        if !(self.contradiction_value > 0.0 && self.contradiction_value <= self.cap) {
            return bad(format!(
                "contradiction_value {} outside (0, cap]",
                self.contradiction_value
            ));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad(format!("decay_rate {} outside (0, 1]", self.decay_rate));
        }
        if self.sim_weight_embed < 0.0
            || self.sim_weight_lexical < 0.0
            || (self.sim_weight_embed + self.sim_weight_lexical - 1.0).abs() > 1e-9
        {
            return bad("similarity weights must be non-negative and sum to 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.max_candidates_per_attribute == 0 {
            return bad("max_candidates_per_attribute must be at least 1".into());
        }
        if self.embed_dim < 8 {
            return bad(format!("embed_dim {} below 8", self.embed_dim));
        }
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return bad(format!("match_threshold {} outside [0, 1]", self.match_threshold));
        }
        Ok(())
    }
}

/// Noisy-OR evidence merge: `min(1 - (1 - p)(1 - Δ), 0.99)`.
pub fn noisy_or_merge(p: Probability, delta: EvidenceStrength) -> Probability {
    let merged = 1.0 - (1.0 - p.0) * (1.0 - delta.0);
    // rounding in 1 - (1 - p) can land an ulp below a tiny p
    Probability(merged.max(p.0).min(PROBABILITY_CAP))
}

/// Clips an extracted probability into `[p_min, p_max]` for a new candidate.
pub fn clip_initial(p_raw: f64, cfg: &BeliefConfig) -> Result<Probability, BeliefError> {
    if !(0.0..=1.0).contains(&p_raw) {
        return Err(BeliefError::RawProbabilityOutOfRange(p_raw));
    }
    Probability::new(p_raw.clamp(cfg.p_min, cfg.p_max))
}

/// Left fold of [`noisy_or_merge`], capping after every step.
pub fn merge_sequence(p0: Probability, deltas: &[EvidenceStrength]) -> Probability {
    deltas.iter().fold(p0, |p, &d| noisy_or_merge(p, d))
}

/// Result of downgrading a contradicted candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Downgrade {
    pub new: Probability,
    /// The value held before the contradiction, kept as a historical version.
    pub archived: Probability,
}

/// Sets a contradicted candidate to the configured contradiction value,
/// whatever its current value.
pub fn contradiction_downgrade(p: Probability, cfg: &BeliefConfig) -> Downgrade {
    Downgrade {
        new: Probability::new(cfg.contradiction_value).unwrap_or(Probability(CONTRADICTION_VALUE)),
        archived: p,
    }
}

/// Retrieval decay factor `λ^τ`.
pub fn decay_weight(lambda: f64, tau: u64) -> f64 {
    match i32::try_from(tau) {
        Ok(t) => lambda.powi(t),
        Err(_) => lambda.powf(tau as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn d(v: f64) -> EvidenceStrength {
        EvidenceStrength::new(v).unwrap()
    }

    #[test]
    fn merge_worked_values() {
        assert!((noisy_or_merge(p(0.70), d(0.80)).get() - 0.94).abs() < 1e-12);
        // uncapped 0.998
        assert_eq!(noisy_or_merge(p(0.98), d(0.90)).get(), 0.99);
        assert_eq!(noisy_or_merge(p(0.42), d(0.0)).get(), 0.42);
    }

    #[test]
    fn clip_worked_values() {
        let cfg = BeliefConfig::default();
        assert_eq!(clip_initial(0.95, &cfg).unwrap().get(), 0.90);
        assert_eq!(clip_initial(0.50, &cfg).unwrap().get(), 0.70);
        assert_eq!(clip_initial(0.80, &cfg).unwrap().get(), 0.80);
        assert_eq!(
            clip_initial(1.2, &cfg),
            Err(BeliefError::RawProbabilityOutOfRange(1.2))
        );
        assert!(clip_initial(-0.1, &cfg).is_err());
        assert!(clip_initial(f64::NAN, &cfg).is_err());
    }

    #[test]
    fn sequence_worked_values() {
        assert!((merge_sequence(p(0.7), &[d(0.5), d(0.5)]).get() - 0.925).abs() < 1e-12);
        assert_eq!(merge_sequence(p(0.7), &[d(0.9), d(0.9), d(0.9)]).get(), 0.99);
        assert_eq!(merge_sequence(p(0.7), &[]).get(), 0.7);
    }

    #[test]
    fn downgrade_worked_values() {
        let cfg = BeliefConfig::default();
        for (before, archived) in [(0.90, 0.90), (0.25, 0.25), (0.10, 0.10)] {
            let out = contradiction_downgrade(p(before), &cfg);
            assert_eq!(out.new.get(), 0.25);
            assert_eq!(out.archived.get(), archived);
        }
    }

    #[test]
    fn decay_worked_values() {
        assert_eq!(decay_weight(0.5, 3), 0.125);
        assert_eq!(decay_weight(0.5, 0), 1.0);
        assert_eq!(decay_weight(1.0, 100), 1.0);
        assert_eq!(decay_weight(1.0, u64::MAX), 1.0);
    }

    #[test]
    fn newtype_bounds() {
        assert!(Probability::new(0.0).is_err());
        assert!(Probability::new(0.991).is_err());
        assert!(Probability::new(0.99).is_ok());
        assert!(EvidenceStrength::new(1.0).is_ok());
        assert!(EvidenceStrength::new(1.0001).is_err());
        assert!(serde_json::from_str::<Probability>("1.5").is_err());
        assert_eq!(serde_json::from_str::<Probability>("0.5").unwrap().get(), 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(BeliefConfig::default().validate().is_ok());
        let d = BeliefConfig::default;
        for cfg in [
            BeliefConfig { p_min: 0.95, ..d() },
            BeliefConfig { sim_weight_lexical: 0.5, ..d() },
            BeliefConfig { decay_rate: 0.0, ..d() },
            BeliefConfig { top_k: 0, ..d() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    fn prob() -> impl Strategy<Value = Probability> {
        (1e-9f64..=0.99).prop_map(|v| Probability::new(v).unwrap())
    }

    fn strength() -> impl Strategy<Value = EvidenceStrength> {
        (0.0f64..=1.0).prop_map(|v| EvidenceStrength::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn merge_is_bounded_and_monotone(p0 in prob(), delta in strength()) {
            let out = noisy_or_merge(p0, delta).get();
            prop_assert!(out > 0.0 && out <= PROBABILITY_CAP);
            prop_assert!(out >= p0.get());
        }

        #[test]
        fn merge_strictly_increases_below_cap(p0 in 1e-3f64..0.98, delta in 1e-3f64..=1.0) {
            let out = noisy_or_merge(p(p0), d(delta)).get();
            prop_assert!(out > p0);
        }

        #[test]
        fn cap_is_absorbing(deltas in proptest::collection::vec(strength(), 0..12)) {
            prop_assert_eq!(merge_sequence(Probability::CAP, &deltas).get(), PROBABILITY_CAP);
        }

        #[test]
        fn sequence_matches_product_form(p0 in prob(), deltas in proptest::collection::vec(strength(), 0..10)) {
            let product: f64 = deltas.iter().map(|x| 1.0 - x.get()).product();
            let closed = (1.0 - (1.0 - p0.get()) * product).min(PROBABILITY_CAP);
            prop_assert!((merge_sequence(p0, &deltas).get() - closed).abs() < 1e-9);
        }

        #[test]
        fn clip_is_idempotent(raw in 0.0f64..=1.0) {
            let cfg = BeliefConfig::default();
            let once = clip_initial(raw, &cfg).unwrap();
            prop_assert!(once.get() >= cfg.p_min && once.get() <= cfg.p_max);
            prop_assert_eq!(clip_initial(once.get(), &cfg).unwrap(), once);
        }

        #[test]
        fn decay_strictly_decreasing(lambda in 0.1f64..0.999, tau in 0u64..200) {
            prop_assert!(decay_weight(lambda, tau + 1) < decay_weight(lambda, tau));
        }
    }
}
