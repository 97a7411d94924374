//! Top-1 rate as evidence accumulates, belief memory against raw frequency.
//! Pass a seed as the first argument.

use beliefmem::harness::{run_convergence, write_curves_csv, ConvergenceSpec, MemoryKind};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = ConvergenceSpec { seed, ..ConvergenceSpec::default() };
    let belief = run_convergence(&spec, MemoryKind::Belief).unwrap();
    let freq = run_convergence(&spec, MemoryKind::Frequency).unwrap();
    write_curves_csv(
        std::io::stdout(),
        &[("belief", &belief.curve), ("frequency", &freq.curve)],
    )
    .unwrap();
    println!("final: belief {:.6}, frequency {:.6}", belief.final_rate, freq.final_rate);
}
