use std::time::Instant;

use neurogrow::analysis::{scaling_benchmark, ScalingConfig};
use neurogrow::dynamics::{IzhikevichParams, NoiseParams};
use neurogrow::topology::TopologyParams;

fn main() {
    let sizes: Vec<usize> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![1500]);
    let cap: u64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(40_000);
    let cfg = ScalingConfig { step_cap: cap, bias_len: 1.25, ..ScalingConfig::default() };
    let t0 = Instant::now();
    let mut last = Instant::now();
    let rows = scaling_benchmark(
        &sizes,
        &cfg,
        &IzhikevichParams::default(),
        &NoiseParams::default(),
        &TopologyParams::default(),
        1,
        |n, t| {
            eprintln!("  n {n} step {t} (+{:?})", last.elapsed());
            last = Instant::now();
        },
    )
    .unwrap();
    for r in rows {
        eprintln!(
            "N {:6} units {:4} steps_to_tiling {:?} coverage {:.3} peak {} converged {}",
            r.nodes, r.units, r.steps_to_tiling, r.coverage, r.peak_simultaneous, r.converged
        );
    }
    eprintln!("total {:?}", t0.elapsed());
}
