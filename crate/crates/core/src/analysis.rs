//! Measurement and theory side: connected-component wave detection over
//! spike rasters, receptive-field pool extraction and tiling coverage, and
//! the threshold-linear rate model with exhaustive and iterative fixed-point
//! solvers plus the analytic stability verdict.

use std::collections::BTreeSet;
use std::io::Write;

use crate::dynamics::{step, NoiseParams, SpikeTrace};
use crate::error::{Error, Result};
use crate::plasticity::{forward_wta, hebbian_update, update_thresholds, ProcessingUnits};
use crate::rng::{CounterRng, Stream};
use crate::topology::{LayerGeometry, SynapticMatrix};

/// Connected set of simultaneously active nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub members: Vec<u32>,
    pub centroid: [f64; 2],
    pub extent: f64,
}

fn centroid_of(members: &[u32], geom: &LayerGeometry) -> [f64; 2] {
    let mut c = [0.0, 0.0];
    for &i in members {
        let p = geom.position(i as usize);
        c[0] += p[0];
        c[1] += p[1];
    }
    c[0] /= members.len() as f64;
    c[1] /= members.len() as f64;
    c
}

fn extent_of(members: &[u32], geom: &LayerGeometry) -> f64 {
    let mut best = 0.0f64;
    for (k, &a) in members.iter().enumerate() {
        for &b in &members[k + 1..] {
            best = best.max(geom.distance(a as usize, b as usize));
        }
    }
    best
}

/// Partitions the active nodes into connected components under the given
/// adjacency lists. Components come out sorted by their lowest member id.
pub fn components_at(
    active: &[u32],
    geom: &LayerGeometry,
    neighbors: &[Vec<u32>],
) -> Vec<Component> {
    let set: BTreeSet<u32> = active.iter().copied().collect();
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in &set {
        if seen.contains(&start) {
            continue;
        }
        let mut members = vec![start];
        let mut queue = vec![start];
        seen.insert(start);
        while let Some(i) = queue.pop() {
            for &j in &neighbors[i as usize] {
                if set.contains(&j) && seen.insert(j) {
                    members.push(j);
                    queue.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(Component {
            centroid: centroid_of(&members, geom),
            extent: extent_of(&members, geom),
            members,
        });
    }
    out
}

/// Per-step activity summary kept for every step of a raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub active: u32,
    pub components: u32,
    pub largest: u32,
}

/// One tracked component over consecutive steps. Lifetime counts step
/// transitions survived: a component seen on steps 0..=10 has lifetime 10.
/// `displacement` is the peak centroid distance from the birth position.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveTrack {
    pub start: u64,
    pub end: u64,
    pub peak_members: u32,
    pub max_extent: f64,
    pub displacement: f64,
}

impl WaveTrack {
    pub fn lifetime(&self) -> u64 {
        self.end - self.start
    }

    /// A track counts as a traveling wave when it persisted long enough and
    /// its centroid moved at least its own spatial extent.
    pub fn qualifies(&self, persistence: u64) -> bool {
        self.lifetime() >= persistence && self.displacement >= self.max_extent
    }
}

#[derive(Debug, Clone, Default)]
pub struct WaveStats {
    pub per_step: Vec<StepSummary>,
    pub tracks: Vec<WaveTrack>,
    pub persistence: u64,
}

impl WaveStats {
    pub fn qualifying(&self) -> impl Iterator<Item = &WaveTrack> {
        self.tracks.iter().filter(|t| t.qualifies(self.persistence))
    }

    /// True when some qualifying track overlaps the step range [from, to).
    pub fn wave_in_window(&self, from: u64, to: u64) -> bool {
        self.qualifying().any(|t| t.start < to && t.end >= from)
    }
}

pub const DEFAULT_WAVE_PERSISTENCE: u64 = 5;

struct OpenTrack {
    start: u64,
    start_centroid: [f64; 2],
    last_members: Vec<u32>,
    last_step: u64,
    peak_members: u32,
    max_extent: f64,
    // Peak centroid distance from the birth position. Long-lived waves in a
    // bounded sheet diffuse back toward their origin, so the end-to-end
    // displacement understates how far they actually traveled.
    max_excursion: f64,
}

fn shared_count(a: &[u32], b: &[u32]) -> u32 {
    // Both sorted ascending.
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Decomposes every raster step into components and links them across steps
/// by contact with the previous members' neighborhood (largest contact wins,
/// earlier track on ties).
pub fn detect_waves(
    trace: &SpikeTrace,
    geom: &LayerGeometry,
    excitation_radius: f64,
    persistence: u64,
) -> Result<WaveStats> {
    if trace.n() != geom.len() {
        return Err(Error::invalid(format!(
            "raster has {} nodes, geometry has {}",
            trace.n(),
            geom.len()
        )));
    }
    let neighbors = geom.radius_neighbors(excitation_radius);
    let mut stats = WaveStats { persistence, ..Default::default() };
    let mut open: Vec<OpenTrack> = Vec::new();
    let close = |t: OpenTrack, stats: &mut WaveStats| {
        stats.tracks.push(WaveTrack {
            start: t.start,
            end: t.last_step,
            peak_members: t.peak_members,
            max_extent: t.max_extent,
            displacement: t.max_excursion,
        });
    };
    for s in 0..trace.steps() {
        let active = trace.spiking_at(s);
        let comps = components_at(&active, geom, &neighbors);
        stats.per_step.push(StepSummary {
            active: active.len() as u32,
            components: comps.len() as u32,
            largest: comps.iter().map(|c| c.members.len() as u32).max().unwrap_or(0),
        });
        // Greedy matching: a component continues a track when it touches the
        // track's previous members or their immediate neighborhood (a front
        // can shift by its full width in one step and still be the same
        // wave). Best contact count wins; earlier tracks win ties.
        let reaches: Vec<Vec<u32>> = open
            .iter()
            .map(|track| {
                let mut reach = track.last_members.clone();
                for &i in &track.last_members {
                    reach.extend_from_slice(&neighbors[i as usize]);
                }
                reach.sort_unstable();
                reach.dedup();
                reach
            })
            .collect();
        let mut claims: Vec<(usize, usize, u32)> = Vec::new();
        for (ci, comp) in comps.iter().enumerate() {
            let mut best: Option<(usize, u32)> = None;
            for (ti, reach) in reaches.iter().enumerate() {
                let n = shared_count(&comp.members, reach);
                if n > 0 && best.map_or(true, |(_, bn)| n > bn) {
                    best = Some((ti, n));
                }
            }
            if let Some((ti, n)) = best {
                claims.push((ti, ci, n));
            }
        }
        claims.sort_by(|a, b| (a.0, std::cmp::Reverse(a.2), a.1).cmp(&(b.0, std::cmp::Reverse(b.2), b.1)));
        let mut continued_track = vec![false; open.len()];
        let mut continued_comp = vec![false; comps.len()];
        let mut next_open: Vec<OpenTrack> = Vec::new();
        for (ti, ci, _) in claims {
            if continued_track[ti] || continued_comp[ci] {
                continue;
            }
            continued_track[ti] = true;
            continued_comp[ci] = true;
            let prev = &open[ti];
            let comp = &comps[ci];
            let dx = comp.centroid[0] - prev.start_centroid[0];
            let dy = comp.centroid[1] - prev.start_centroid[1];
            next_open.push(OpenTrack {
                start: prev.start,
                start_centroid: prev.start_centroid,
                last_members: comp.members.clone(),
                last_step: s as u64,
                peak_members: prev.peak_members.max(comp.members.len() as u32),
                max_extent: prev.max_extent.max(comp.extent),
                max_excursion: prev.max_excursion.max((dx * dx + dy * dy).sqrt()),
            });
        }
        for (ti, track) in open.drain(..).enumerate() {
            if !continued_track[ti] {
                close(track, &mut stats);
            }
        }
        for (ci, comp) in comps.into_iter().enumerate() {
            if !continued_comp[ci] {
                next_open.push(OpenTrack {
                    start: s as u64,
                    start_centroid: comp.centroid,
                    last_members: comp.members,
                    last_step: s as u64,
                    peak_members: 0,
                    max_extent: comp.extent,
                    max_excursion: 0.0,
                });
                let t = next_open.last_mut().unwrap();
                t.peak_members = t.last_members.len() as u32;
            }
        }
        open = next_open;
        // Keep track order stable by start step for deterministic ties.
        open.sort_by_key(|t| (t.start, t.last_members[0]));
    }
    for track in open {
        close(track, &mut stats);
    }
    stats.tracks.sort_by_key(|t| (t.start, t.end));
    Ok(stats)
}

pub fn write_wave_tracks_csv<W: Write>(stats: &WaveStats, mut out: W) -> Result<()> {
    out.write_all(b"start,end,lifetime,peak_members,max_extent,displacement,qualifies\n")?;
    for t in &stats.tracks {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.start,
            t.end,
            t.lifetime(),
            t.peak_members,
            t.max_extent,
            t.displacement,
            t.qualifies(stats.persistence) as u8
        )?;
    }
    Ok(())
}

/// Receptive-field pool of one processing unit: the alive nodes whose weight
/// clears a fraction of the unit's maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub unit: u32,
    pub members: Vec<u32>,
    pub centroid: [f64; 2],
    pub extent: f64,
    /// Set when the members are not one connected patch or show no spatial
    /// selectivity (every alive node qualified).
    pub flagged: bool,
}

pub const DEFAULT_POOL_FRAC: f64 = 0.5;

pub fn extract_pools(
    units: &ProcessingUnits,
    geom: &LayerGeometry,
    frac: f64,
    contiguity_radius: f64,
) -> Result<Vec<Pool>> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::invalid("pool membership fraction must lie in (0,1)"));
    }
    if units.inputs() != geom.len() {
        return Err(Error::invalid(format!(
            "units expect {} input nodes, geometry has {}",
            units.inputs(),
            geom.len()
        )));
    }
    let neighbors = geom.radius_neighbors(contiguity_radius);
    let alive_count = geom.alive_count();
    let mut pools = Vec::with_capacity(units.units());
    for j in 0..units.units() {
        let w = units.weights(j);
        let mut max_w = 0.0f64;
        for i in 0..geom.len() {
            if geom.is_alive(i) {
                max_w = max_w.max(w[i]);
            }
        }
        let members: Vec<u32> = (0..geom.len())
            .filter(|&i| geom.is_alive(i) && w[i] >= frac * max_w && max_w > 0.0)
            .map(|i| i as u32)
            .collect();
        if members.is_empty() {
            pools.push(Pool {
                unit: j as u32,
                members,
                centroid: [f64::NAN, f64::NAN],
                extent: 0.0,
                flagged: true,
            });
            continue;
        }
        let comps = components_at(&members, geom, &neighbors);
        let flagged = comps.len() != 1 || members.len() == alive_count;
        pools.push(Pool {
            unit: j as u32,
            centroid: centroid_of(&members, geom),
            extent: extent_of(&members, geom),
            members,
            flagged,
        });
    }
    Ok(pools)
}

/// Fraction of alive nodes covered by at least one unflagged pool.
pub fn tiling_coverage(pools: &[Pool], geom: &LayerGeometry) -> f64 {
    let alive = geom.alive_count();
    if alive == 0 {
        return 0.0;
    }
    let mut covered = vec![false; geom.len()];
    for p in pools.iter().filter(|p| !p.flagged) {
        for &i in &p.members {
            covered[i as usize] = true;
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / alive as f64
}

pub fn write_pool_members_csv<W: Write>(pools: &[Pool], mut out: W) -> Result<()> {
    out.write_all(b"unit_id,node_id\n")?;
    for p in pools {
        for &i in &p.members {
            writeln!(out, "{},{}", p.unit, i)?;
        }
    }
    Ok(())
}

pub fn write_pool_summary_csv<W: Write>(pools: &[Pool], mut out: W) -> Result<()> {
    out.write_all(b"unit_id,centroid_x,centroid_y,extent,flagged\n")?;
    for p in pools {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.unit, p.centroid[0], p.centroid[1], p.extent, p.flagged as u8
        )?;
    }
    Ok(())
}

/// Heaviside convention for the rate model, stated in every export.
pub const RATE_CONVENTION: &str =
    "F(0)=1; active set A consistent iff for all j: x_j >= 0 exactly when j is in A";

/// Stability verdict for a rate-model fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stability {
    /// Away from the Heaviside kink the Jacobian is exactly -(1/tau_d)*I.
    Stable { eigenvalue: f64, multiplicity: usize },
    /// Some coordinate sits on the kink; the Jacobian is undefined there.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x: Vec<f64>,
    pub active_set: Vec<u32>,
    pub residual: f64,
    pub stability: Stability,
}

fn active_vector(matrix: &SynapticMatrix, active: &[u32]) -> Vec<f64> {
    let mut x = vec![0.0; matrix.n()];
    matrix.accumulate_drive(active, &mut x);
    for (i, v) in x.iter_mut().enumerate() {
        *v /= matrix_drive_unit(matrix, i);
    }
    x
}

// accumulate_drive multiplies by the per-spike weight directly, which is
// exactly the rate-model sum; the unit factor keeps this explicit.
fn matrix_drive_unit(_matrix: &SynapticMatrix, _i: usize) -> f64 {
    1.0
}

fn consistent(matrix: &SynapticMatrix, active: &[u32]) -> Option<Vec<f64>> {
    let x = active_vector(matrix, active);
    let mut in_a = vec![false; matrix.n()];
    for &j in active {
        in_a[j as usize] = true;
    }
    for (j, &xv) in x.iter().enumerate() {
        if (xv >= 0.0) != in_a[j] {
            return None;
        }
    }
    Some(x)
}

fn residual_of(matrix: &SynapticMatrix, x: &[f64]) -> f64 {
    let active: Vec<u32> =
        x.iter().enumerate().filter(|(_, v)| **v >= 0.0).map(|(i, _)| i as u32).collect();
    let sx = active_vector(matrix, &active);
    x.iter().zip(&sx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn jacobian_stability(x: &[f64], tau_d: f64) -> Result<Stability> {
    if !(tau_d > 0.0) || !tau_d.is_finite() {
        return Err(Error::invalid("tau_d must be positive and finite"));
    }
    if x.iter().any(|&v| v == 0.0) {
        return Ok(Stability::Undetermined);
    }
    Ok(Stability::Stable { eigenvalue: -1.0 / tau_d, multiplicity: x.len() })
}

fn fixed_point_from(matrix: &SynapticMatrix, active: Vec<u32>, x: Vec<f64>, tau_d: f64) -> FixedPoint {
    FixedPoint {
        residual: residual_of(matrix, &x),
        stability: jacobian_stability(&x, tau_d).expect("tau_d validated by caller"),
        active_set: active,
        x,
    }
}

pub const BRUTEFORCE_MAX_NODES: usize = 16;

/// Enumerates every active set and keeps the consistent ones. Exponential in
/// the node count, so refuses layouts beyond `max_n` and points at the
/// iterative solver instead.
pub fn rate_fixed_points_bruteforce(
    matrix: &SynapticMatrix,
    max_n: usize,
    tau_d: f64,
) -> Result<Vec<FixedPoint>> {
    if !(tau_d > 0.0) || !tau_d.is_finite() {
        return Err(Error::invalid("tau_d must be positive and finite"));
    }
    let n = matrix.n();
    if n > max_n {
        return Err(Error::SizeLimit {
            size: n,
            limit: max_n,
            hint: "exhaustive enumeration is exponential; use the iterative solver".into(),
        });
    }
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << n) {
        let active: Vec<u32> = (0..n as u32).filter(|i| mask >> i & 1 == 1).collect();
        if let Some(x) = consistent(matrix, &active) {
            out.push(fixed_point_from(matrix, active, x, tau_d));
        }
    }
    Ok(out)
}

/// Iterates the active-set map x <- S*F(x) from random starts, discarding
/// starts that cycle without settling. Returns the deduplicated fixed points
/// and the number of discarded starts.
pub fn rate_fixed_points_iterative(
    matrix: &SynapticMatrix,
    geom: &LayerGeometry,
    starts: usize,
    seed: u64,
    tau_d: f64,
) -> Result<(Vec<FixedPoint>, usize)> {
    if !(tau_d > 0.0) || !tau_d.is_finite() {
        return Err(Error::invalid("tau_d must be positive and finite"));
    }
    if starts == 0 {
        return Err(Error::invalid("need at least one start"));
    }
    if geom.len() != matrix.n() {
        return Err(Error::invalid("geometry and matrix disagree on node count"));
    }
    let rng = CounterRng::new(seed, Stream::RateInit);
    let max_iter = 200;
    let mut found: Vec<FixedPoint> = Vec::new();
    let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut discarded = 0usize;
    for s in 0..starts {
        let mut active: Vec<u32> = (0..matrix.n())
            .filter(|&i| geom.is_alive(i) && rng.uniform(s as u64, i as u64) < 0.5)
            .map(|i| i as u32)
            .collect();
        let mut settled = false;
        let mut visited: BTreeSet<Vec<u32>> = BTreeSet::new();
        for _ in 0..max_iter {
            let x = active_vector(matrix, &active);
            let next: Vec<u32> = (0..matrix.n())
                .filter(|&i| x[i] >= 0.0)
                .map(|i| i as u32)
                .collect();
            if next == active {
                settled = true;
                break;
            }
            if !visited.insert(next.clone()) {
                break;
            }
            active = next;
        }
        if !settled {
            discarded += 1;
            continue;
        }
        if seen.insert(active.clone()) {
            let x = active_vector(matrix, &active);
            found.push(fixed_point_from(matrix, active, x, tau_d));
        }
    }
    found.sort_by(|a, b| a.active_set.cmp(&b.active_set));
    Ok((found, discarded))
}

pub fn write_fixed_points_json<W: Write>(
    fps: &[FixedPoint],
    tau_d: f64,
    mut out: W,
) -> Result<()> {
    #[derive(serde::Serialize)]
    struct FpOut<'a> {
        active_set: &'a [u32],
        x: &'a [f64],
        residual: f64,
        stable: Option<bool>,
        eigenvalue: Option<f64>,
        multiplicity: Option<usize>,
    }
    #[derive(serde::Serialize)]
    struct Doc<'a> {
        convention: &'static str,
        tau_d: f64,
        fixed_points: Vec<FpOut<'a>>,
    }
    let doc = Doc {
        convention: RATE_CONVENTION,
        tau_d,
        fixed_points: fps
            .iter()
            .map(|f| {
                let (stable, eigenvalue, multiplicity) = match f.stability {
                    Stability::Stable { eigenvalue, multiplicity } => {
                        (Some(true), Some(eigenvalue), Some(multiplicity))
                    }
                    Stability::Undetermined => (None, None, None),
                };
                FpOut {
                    active_set: &f.active_set,
                    x: &f.x,
                    residual: f.residual,
                    stable,
                    eigenvalue,
                    multiplicity,
                }
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::invalid(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub tau_d: f64,
    pub dt: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams { tau_d: 1.0, dt: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct RateTrace {
    pub transitions: u64,
    pub final_x: Vec<f64>,
    /// Dominant-component member sets at each counted transition.
    pub transition_steps: Vec<u64>,
}

/// Euler-integrates the noisy rate equation from `x0` and counts bump
/// relocations: a transition is recorded whenever the dominant active
/// component shares less than half (by Jaccard overlap) with the dominant
/// component at the previous transition.
pub fn simulate_rate_model(
    matrix: &SynapticMatrix,
    geom: &LayerGeometry,
    params: &RateParams,
    sigma2: f64,
    x0: &[f64],
    steps: u64,
    seed: u64,
    excitation_radius: f64,
) -> Result<RateTrace> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    if !(params.tau_d > 0.0) || !(params.dt > 0.0) {
        return Err(Error::invalid("tau_d and dt must be positive"));
    }
    if x0.len() != matrix.n() || geom.len() != matrix.n() {
        return Err(Error::invalid("state, matrix, and geometry sizes disagree"));
    }
    if sigma2 < 0.0 {
        return Err(Error::invalid("sigma2 must be non-negative"));
    }
    let neighbors = geom.radius_neighbors(excitation_radius);
    let rng = CounterRng::new(seed, Stream::RateNoise);
    let noise_scale = (sigma2 * params.dt).sqrt() / params.tau_d;
    let mut x = x0.to_vec();
    let mut reference: Option<Component> = None;
    let mut trace = RateTrace { transitions: 0, final_x: Vec::new(), transition_steps: Vec::new() };
    for t in 0..steps {
        let active: Vec<u32> =
            x.iter().enumerate().filter(|(_, v)| **v >= 0.0).map(|(i, _)| i as u32).collect();
        let mut drive = vec![0.0; matrix.n()];
        matrix.accumulate_drive(&active, &mut drive);
        for i in 0..x.len() {
            let eta = if sigma2 > 0.0 { noise_scale * rng.gaussian(t, i as u64) } else { 0.0 };
            x[i] += params.dt / params.tau_d * (drive[i] - x[i]) + eta;
            if !x[i].is_finite() {
                return Err(Error::Numeric { step: t, message: "rate state diverged".into() });
            }
        }
        let comps = components_at(&active, geom, &neighbors);
        // A transition is a relocation of the dominant active cluster: its
        // centroid must move at least half the reference cluster's own size
        // away from where the reference sat. Boundary nodes dithering in and
        // out under stationary noise do not move the centroid that far, so
        // they are not counted.
        let dominant = comps
            .iter()
            .max_by_key(|c| (c.members.len(), std::cmp::Reverse(c.members[0])))
            .cloned();
        if let Some(dom) = dominant {
            match &reference {
                None => reference = Some(dom),
                Some(prev) => {
                    let dx = dom.centroid[0] - prev.centroid[0];
                    let dy = dom.centroid[1] - prev.centroid[1];
                    let dist = (dx * dx + dy * dy).sqrt();
                    let threshold = 0.5 * prev.extent.max(2.0 * excitation_radius);
                    if dist >= threshold {
                        trace.transitions += 1;
                        trace.transition_steps.push(t);
                        reference = Some(dom);
                    }
                }
            }
        }
    }
    trace.final_x = x;
    Ok(trace)
}

/// One row of the size-sweep benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub nodes: usize,
    pub units: usize,
    pub steps_to_tiling: Option<u64>,
    pub coverage: f64,
    pub peak_simultaneous: u32,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub spacing: f64,
    pub units_per_25_nodes: f64,
    pub coverage_target: f64,
    pub step_cap: u64,
    pub check_every: u64,
    pub pool_frac: f64,
    pub excitation_radius: f64,
    pub min_wave_members: usize,
    pub eta_learn: f64,
    pub bias_len: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            spacing: 0.5,
            units_per_25_nodes: 1.0,
            coverage_target: 0.9,
            step_cap: 40_000,
            check_every: 500,
            pool_frac: DEFAULT_POOL_FRAC,
            excitation_radius: 2.0,
            min_wave_members: 5,
            eta_learn: crate::plasticity::DEFAULT_ETA_LEARN,
            bias_len: 3.0,
        }
    }
}

/// Grid geometry with exactly `n` nodes at the given spacing (rows x cols
/// grid trimmed row-major).
pub fn build_sized_grid(n: usize, spacing: f64) -> Result<LayerGeometry> {
    if n == 0 {
        return Err(Error::invalid("node count must be at least 1"));
    }
    let rows = (n as f64).sqrt().floor().max(1.0) as usize;
    let cols = n.div_ceil(rows);
    let mut positions = Vec::with_capacity(n);
    'outer: for r in 0..rows + 1 {
        for c in 0..cols {
            if positions.len() == n {
                break 'outer;
            }
            positions.push([c as f64 * spacing, r as f64 * spacing]);
        }
    }
    LayerGeometry::from_positions(positions, "sized-grid")
}

/// Runs self-organization at each size until the pools tile the layer or the
/// step cap is hit, tracking the peak number of simultaneous wave-sized
/// components. Progress is reported through `progress` (size, step).
pub fn scaling_benchmark<F>(
    sizes: &[usize],
    cfg: &ScalingConfig,
    izh: &crate::dynamics::IzhikevichParams,
    noise: &NoiseParams,
    topo: &crate::topology::TopologyParams,
    seed: u64,
    mut progress: F,
) -> Result<Vec<ScalingRow>>
where
    F: FnMut(usize, u64),
{
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("sizes must be non-decreasing"));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let geom = build_sized_grid(n, cfg.spacing)?;
        let matrix = SynapticMatrix::build(&geom, topo)?;
        let neighbors = geom.radius_neighbors(cfg.excitation_radius);
        let m = ((n as f64 / 25.0) * cfg.units_per_25_nodes).ceil().max(1.0) as usize;
        let mut units =
            crate::plasticity::init_units_biased(m, &geom, seed, cfg.eta_learn, cfg.bias_len)?;
        let mut state = crate::dynamics::init_layer_state(&geom, izh, seed)?;
        let mut peak = 0u32;
        let mut steps_to_tiling = None;
        let mut coverage = 0.0;
        while state.t() < cfg.step_cap {
            step(&mut state, &matrix, noise, 1.0)?;
            let result = forward_wta(&units, state.spiking());
            hebbian_update(&mut units, &result, state.spiking());
            update_thresholds(&mut units, state.t());
            let comps = components_at(state.spiking(), &geom, &neighbors);
            let big = comps.iter().filter(|c| c.members.len() >= cfg.min_wave_members).count();
            peak = peak.max(big as u32);
            if state.t() % cfg.check_every == 0 {
                progress(n, state.t());
                let pools = extract_pools(&units, &geom, cfg.pool_frac, cfg.excitation_radius)?;
                coverage = tiling_coverage(&pools, &geom);
                if coverage >= cfg.coverage_target {
                    steps_to_tiling = Some(state.t());
                    break;
                }
            }
        }
        rows.push(ScalingRow {
            nodes: n,
            units: m,
            steps_to_tiling,
            coverage,
            peak_simultaneous: peak,
            converged: steps_to_tiling.is_some(),
        });
    }
    Ok(rows)
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], mut out: W) -> Result<()> {
    out.write_all(b"nodes,units,steps_to_tiling,coverage,peak_simultaneous,converged\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.nodes,
            r.units,
            r.steps_to_tiling.map_or(String::new(), |s| s.to_string()),
            r.coverage,
            r.peak_simultaneous,
            r.converged as u8
        )?;
    }
    Ok(())
}
