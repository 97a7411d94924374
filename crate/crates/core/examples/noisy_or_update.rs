//! Evidence accumulation on a single candidate: clipping on add, capped
//! noisy-OR on merge, and the order independence of merging.

use beliefmem::belief::{clip_initial, merge_sequence, noisy_or_merge};
use beliefmem::{BeliefConfig, EvidenceStrength, Probability};

fn main() {
    let cfg = BeliefConfig::default();
    for raw in [0.3, 0.85, 0.97] {
        println!("add with raw {raw:.2} -> {:.6}", clip_initial(raw, &cfg).unwrap().get());
    }

    let mut p = clip_initial(0.7, &cfg).unwrap();
    for delta in [0.5, 0.5, 0.8, 0.9] {
        let next = noisy_or_merge(p, EvidenceStrength::new(delta).unwrap());
        println!("merge {delta:.2}: {:.6} -> {:.6}", p.get(), next.get());
        p = next;
    }

    let deltas: Vec<EvidenceStrength> = [0.2, 0.6, 0.35]
        .into_iter()
        .map(|d| EvidenceStrength::new(d).unwrap())
        .collect();
    let mut reversed = deltas.clone();
    reversed.reverse();
    let start = Probability::new(0.7).unwrap();
    println!(
        "order independence: {:.12} vs {:.12}",
        merge_sequence(start, &deltas).get(),
        merge_sequence(start, &reversed).get()
    );
}
