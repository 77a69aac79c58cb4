use neurogrow::dynamics::*;
use neurogrow::growth::*;
use neurogrow::topology::*;

fn main() {
    // Reference wave run: 30x30 grid at spacing 0.5.
    let geom = build_grid_layer(30, 30, 0.5).unwrap();
    let matrix = SynapticMatrix::build(&geom, &TopologyParams::default()).unwrap();
    let mut state = init_layer_state(&geom, &IzhikevichParams::default(), 1).unwrap();
    let trace = run(&mut state, &matrix, &NoiseParams { sigma2: 9.0 }, 2000, 1.0, |_| {}).unwrap();
    let mean = trace.total_spikes() as f64 / trace.steps() as f64;
    println!("grid 30x30: {} steps, {:.1} spikes/step", trace.steps(), mean);
    assert!(mean > 30.0 && mean < 150.0, "wave regime off: {mean}");
    let bytes = encode_raster(&trace).unwrap();
    let back = decode_raster(&bytes).unwrap();
    assert_eq!(back.total_spikes(), trace.total_spikes());
    assert_eq!(back.steps(), trace.steps());
    println!("raster roundtrip: {} bytes ok", bytes.len());
    let mut csv = Vec::new();
    write_events_csv(&trace, &mut csv).unwrap();
    let mut gcsv = Vec::new();
    write_geometry_csv(&geom, &mut gcsv).unwrap();
    println!("events csv {} bytes, geometry csv {} bytes", csv.len(), gcsv.len());

    // Growth end to end: default scaffold, interleaved dynamics, lineage CSV.
    let net = grow_network(&GrowthParams::default(), &GrowthSimConfig::default(), 1, 2000).unwrap();
    assert!(net.converged);
    let mut lcsv = Vec::new();
    write_lineage_csv(&net.lineage, &mut lcsv).unwrap();
    let last = net.population.last().unwrap();
    println!(
        "growth: converged at sweep {}, pop {:?}, lineage csv {} bytes, {} interleaved steps",
        net.population.len(), last, lcsv.len(), net.state.t()
    );
}
