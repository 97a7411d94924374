//! An agent calls a rate-limited API. The single-conclusion memory stores
//! "failed" and stops calling; the belief memory keeps "rate limited" alive,
//! retries once and recovers.

use beliefmem::harness::{scenario_api_timeout, ApiBehavior, Policy, ScenarioTrace};

fn show(trace: &ScenarioTrace) {
    println!("{:?}", trace.policy);
    for s in &trace.steps {
        let beliefs: Vec<String> = s.beliefs.iter().map(|(h, p)| format!("{h}={p:.6}")).collect();
        println!(
            "  {} {:?} -> {:?}, top {}  {}",
            s.step,
            s.action,
            s.outcome,
            s.top.as_deref().unwrap_or("-"),
            beliefs.join(" ")
        );
    }
    println!("  retries: {}", trace.retries());
}

fn main() {
    for policy in [Policy::DeterministicGreedy, Policy::BeliefThreshold] {
        show(&scenario_api_timeout(policy, ApiBehavior::RateLimitedThenHealthy).unwrap());
    }
}
