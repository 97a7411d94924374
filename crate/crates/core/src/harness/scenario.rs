//! The API-timeout episode. An agent calls a service that is rate-limited for
//! the first three steps and healthy afterwards. A timeout is ambiguous: the
//! service may be down or just throttled. A single-conclusion memory stores
//! "failed" and stops calling; a belief memory keeps the throttling
//! hypothesis alive, retries and recovers.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bank::{AttributeKey, MemoryBank};
use crate::baselines::DeterministicMemory;
use crate::belief::BeliefConfig;
use crate::extraction::{rule_extract, Observation, RuleExtractor};

pub const SCENARIO_STEPS: usize = 8;
/// Steps 1..=FORCED_CALLS always call the API.
pub const FORCED_CALLS: usize = 3;
/// Belief policy retries while a non-top candidate holds at least this.
pub const RETRY_THRESHOLD: f64 = 0.4;

const TIMEOUT_LINES: [&str; 2] = [
    "api_x | status | failed | 0.7 | |",
    "api_x | status | rate limited | 0.6 | |",
];
const SUCCESS_LINE: &str = "api_x | status | operational | 0.9 | | !failed,!rate limited";
pub const OPERATIONAL: &str = "operational";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    BeliefThreshold,
    DeterministicGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApiBehavior {
    /// Rate-limited for the forced steps, healthy afterwards.
    RateLimitedThenHealthy,
    AlwaysHealthy,
}

impl ApiBehavior {
    fn healthy_at(self, step: usize) -> bool {
        match self {
            ApiBehavior::AlwaysHealthy => true,
            ApiBehavior::RateLimitedThenHealthy => step > FORCED_CALLS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    /// Ordinary use of the API.
    Call,
    /// Calling again although memory's top conclusion says it is broken.
    Retry,
    /// Working around the API.
    Avoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Timeout,
    Success,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub step: usize,
    pub action: Action,
    pub outcome: Outcome,
    /// Memory's top conclusion after the step.
    pub top: Option<String>,
    /// `(hypothesis, probability)` after the step, highest first. Empty for
    /// the deterministic memory.
    pub beliefs: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub policy: Policy,
    pub api: ApiBehavior,
    pub steps: Vec<ScenarioStep>,
}

impl ScenarioTrace {
    pub fn retries_after(&self, step: usize) -> usize {
        self.steps
            .iter()
            .filter(|s| s.step > step && s.action == Action::Retry)
            .count()
    }

    pub fn retries(&self) -> usize {
        self.retries_after(0)
    }

    pub fn final_top(&self) -> Option<&str> {
        self.steps.last().and_then(|s| s.top.as_deref())
    }

    /// Action, outcome and top conclusion per step, for comparing policies.
    pub fn outline(&self) -> Vec<(Action, Outcome, Option<String>)> {
        self.steps
            .iter()
            .map(|s| (s.action, s.outcome, s.top.clone()))
            .collect()
    }
}

fn key() -> AttributeKey {
    AttributeKey::simple("api x", "status").expect("non-empty slots")
}

fn observation(step: usize, outcome: Outcome) -> Observation {
    let lines: Vec<&str> = match outcome {
        Outcome::Timeout => TIMEOUT_LINES.to_vec(),
        Outcome::Success => vec![SUCCESS_LINE],
        Outcome::Skipped => Vec::new(),
    };
    Observation::structured(format!("step-{step}"), "", lines)
}

enum Memory {
    Belief(MemoryBank),
    Det(DeterministicMemory),
}

impl Memory {
    fn top(&self) -> Option<String> {
        match self {
            Memory::Belief(bank) => bank
                .entry(&key())
                .and_then(|e| e.ranked().first().map(|c| c.hypothesis.clone())),
            Memory::Det(det) => det.conclusion(&key()).map(str::to_owned),
        }
    }

    fn beliefs(&self) -> Vec<(String, f64)> {
        match self {
            Memory::Belief(bank) => bank.entry(&key()).map_or_else(Vec::new, |e| {
                e.ranked()
                    .into_iter()
                    .map(|c| (c.hypothesis.clone(), c.probability.get()))
                    .collect()
            }),
            Memory::Det(_) => Vec::new(),
        }
    }

    fn decide(&self, step: usize) -> Action {
        if step <= FORCED_CALLS {
            return Action::Call;
        }
        match self.top() {
            None => Action::Call,
            Some(top) if top == OPERATIONAL => Action::Call,
            Some(_) => match self {
                Memory::Belief(_) => {
                    let alive = self
                        .beliefs()
                        .iter()
                        .skip(1)
                        .any(|(_, p)| *p >= RETRY_THRESHOLD);
                    if alive {
                        Action::Retry
                    } else {
                        Action::Avoid
                    }
                }
                Memory::Det(_) => Action::Avoid,
            },
        }
    }

    fn record(&mut self, obs: Observation) -> Result<(), HarnessError> {
        match self {
            Memory::Belief(bank) => {
                bank.ingest(obs, &RuleExtractor)?;
            }
            Memory::Det(det) => det.observe(&rule_extract(&obs)?),
        }
        Ok(())
    }
}

pub fn scenario_api_timeout(policy: Policy, api: ApiBehavior) -> Result<ScenarioTrace, HarnessError> {
    let mut memory = match policy {
        Policy::BeliefThreshold => Memory::Belief(MemoryBank::new(BeliefConfig::default())?),
        Policy::DeterministicGreedy => Memory::Det(DeterministicMemory::new(BeliefConfig::default())),
    };
    let mut steps = Vec::with_capacity(SCENARIO_STEPS);
    for step in 1..=SCENARIO_STEPS {
        let action = memory.decide(step);
        let outcome = match action {
            Action::Avoid => Outcome::Skipped,
            Action::Call | Action::Retry if api.healthy_at(step) => Outcome::Success,
            Action::Call | Action::Retry => Outcome::Timeout,
        };
        memory.record(observation(step, outcome))?;
        steps.push(ScenarioStep {
            step,
            action,
            outcome,
            top: memory.top(),
            beliefs: memory.beliefs(),
        });
    }
    Ok(ScenarioTrace { policy, api, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_stops_calling() {
        let t = scenario_api_timeout(Policy::DeterministicGreedy, ApiBehavior::RateLimitedThenHealthy).unwrap();
        assert_eq!(t.retries_after(FORCED_CALLS), 0);
        assert_eq!(t.final_top(), Some("failed"));
        assert!(t.steps[FORCED_CALLS..].iter().all(|s| s.action == Action::Avoid));
    }

    #[test]
    fn belief_retries_and_recovers() {
        let t = scenario_api_timeout(Policy::BeliefThreshold, ApiBehavior::RateLimitedThenHealthy).unwrap();
        assert_eq!(t.retries(), 1);
        assert_eq!(t.steps[3].action, Action::Retry);
        assert_eq!(t.steps[3].outcome, Outcome::Success);
        assert_eq!(t.final_top(), Some(OPERATIONAL));
    }

    #[test]
    fn healthy_api_same_outline() {
        let b = scenario_api_timeout(Policy::BeliefThreshold, ApiBehavior::AlwaysHealthy).unwrap();
        let d = scenario_api_timeout(Policy::DeterministicGreedy, ApiBehavior::AlwaysHealthy).unwrap();
        assert_eq!(b.outline(), d.outline());
        assert!(b.steps.iter().all(|s| s.outcome == Outcome::Success));
    }
}
