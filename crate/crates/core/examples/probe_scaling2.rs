use neurogrow::analysis::{build_sized_grid, components_at, extract_pools, tiling_coverage};
use neurogrow::dynamics::{init_layer_state, step, IzhikevichParams, NoiseParams};
use neurogrow::plasticity::{forward_wta, hebbian_update, init_units_biased, update_thresholds};
use neurogrow::topology::{SynapticMatrix, TopologyParams};

fn main() {
    let n: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1500);
    let steps: u64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(40_000);
    let m: usize = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(n / 25);
    let bias: f64 = std::env::args().nth(4).map(|s| s.parse().unwrap()).unwrap_or(1.25);
    let geom = build_sized_grid(n, 0.5).unwrap();
    let topo = TopologyParams::default();
    let matrix = SynapticMatrix::build(&geom, &topo).unwrap();
    let neighbors = geom.radius_neighbors(2.0);
    let mut units = init_units_biased(m, &geom, 1, 0.05, bias).unwrap();
    let mut state = init_layer_state(&geom, &IzhikevichParams::default(), 1).unwrap();
    let noise = NoiseParams::default();
    let mut counts: Vec<u32> = Vec::new();
    for _ in 0..steps {
        step(&mut state, &matrix, &noise, 1.0).unwrap();
        let r = forward_wta(&units, state.spiking());
        hebbian_update(&mut units, &r, state.spiking());
        update_thresholds(&mut units, state.t());
        let comps = components_at(state.spiking(), &geom, &neighbors);
        counts.push(comps.iter().filter(|c| c.members.len() >= 5).count() as u32);
        if state.t() % 5000 == 0 {
            let pools = extract_pools(&units, &geom, 0.5, 2.0).unwrap();
            let cov = tiling_coverage(&pools, &geom);
            let flagged = pools.iter().filter(|p| p.flagged).count();
            let sizes: Vec<usize> = pools.iter().map(|p| p.members.len()).collect();
            eprintln!(
                "t {:6} cov {cov:.3} flagged {flagged}/{m} min/med/max pool {} {} {}",
                state.t(),
                sizes.iter().min().unwrap(),
                { let mut s = sizes.clone(); s.sort(); s[s.len()/2] },
                sizes.iter().max().unwrap()
            );
        }
    }
    counts.sort_unstable();
    eprintln!(
        "wave components: median {} p90 {} max {}",
        counts[counts.len() / 2],
        counts[counts.len() * 9 / 10],
        counts.last().unwrap()
    );
}
