//! Correction of an injected flawed conclusion under valid and noisy
//! evidence, belief memory against a single-conclusion store.

use beliefmem::harness::{run_adversarial, AdversarialSpec, MemoryKind};

fn main() {
    println!("seed  belief  steps  deterministic");
    for seed in 0..10 {
        let spec = AdversarialSpec { seed, ..AdversarialSpec::default() };
        let b = run_adversarial(&spec, MemoryKind::Belief).unwrap();
        let d = run_adversarial(&spec, MemoryKind::Deterministic).unwrap();
        println!(
            "{seed:>4}  {:.4}  {:.3}  {:.4}",
            b.correction_rate,
            b.mean_correction_steps.unwrap_or(f64::NAN),
            d.correction_rate
        );
    }
}
