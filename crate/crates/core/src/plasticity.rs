//! Layer-II processing units: winner-take-all competition over spike input,
//! a reinforce-then-normalize Hebbian weight update, and adaptive thresholds
//! that silence units whose win rate stays high and re-arm the quiet ones.

use std::io::{Read, Write};

use crate::dynamics::{step, LayerState, NoiseParams};
use crate::error::{Error, Result};
use crate::rng::{CounterRng, Stream};
use crate::topology::{LayerGeometry, SynapticMatrix};

/// Steps per threshold-adaptation window.
pub const THRESHOLD_WINDOW: u64 = 1000;
/// Units winning fewer times than this per window get their threshold reset.
pub const MIN_WINDOW_UPDATES: u32 = 200;
/// New threshold is the unit's running max activation divided by this.
pub const THRESHOLD_DIVISOR: f64 = 5.0;
/// Default Hebbian learning rate.
pub const DEFAULT_ETA_LEARN: f64 = 0.05;

/// Inter-layer weights plus per-unit competition bookkeeping. Weights are
/// unit-major: unit `j` owns `w[j*n .. (j+1)*n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessingUnits {
    m: usize,
    n: usize,
    eta_learn: f64,
    w: Vec<f64>,
    c: Vec<f64>,
    z: Vec<u32>,
    y_max: Vec<f64>,
    mean0: Vec<f64>,
}

/// Outcome of one winner-take-all pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinnerResult {
    pub winner: Option<u32>,
    /// Post-threshold activation of the winner; 0 when there is no winner.
    pub activation: f64,
}

impl WinnerResult {
    pub const NONE: WinnerResult = WinnerResult { winner: None, activation: 0.0 };
}

impl ProcessingUnits {
    pub fn units(&self) -> usize {
        self.m
    }

    pub fn inputs(&self) -> usize {
        self.n
    }

    pub fn eta_learn(&self) -> f64 {
        self.eta_learn
    }

    /// Weight vector of one unit over all input nodes.
    pub fn weights(&self, unit: usize) -> &[f64] {
        &self.w[unit * self.n..(unit + 1) * self.n]
    }

    pub fn threshold(&self, unit: usize) -> f64 {
        self.c[unit]
    }

    pub fn window_wins(&self, unit: usize) -> u32 {
        self.z[unit]
    }

    pub fn max_activation(&self, unit: usize) -> f64 {
        self.y_max[unit]
    }

    pub fn normalization_target(&self, unit: usize) -> f64 {
        self.mean0[unit]
    }

    /// Appends one input node; every unit draws its new weight at the same
    /// counter it would have used had the node existed at init, so grown
    /// populations match bulk initialization bit for bit. Normalization
    /// targets are rebased to the new column count.
    pub fn push_input_node(&mut self, seed: u64) {
        let rng = CounterRng::new(seed, Stream::UnitInit);
        let i = self.n;
        self.n += 1;
        // Insert in reverse so earlier rows keep their offsets while
        // splicing; rebuilding is O(m*n) either way, keep it simple.
        let mut w = Vec::with_capacity(self.m * self.n);
        for j in 0..self.m {
            w.extend_from_slice(&self.w[j * (self.n - 1)..(j + 1) * (self.n - 1)]);
            w.push(rng.uniform_open(j as u64, i as u64));
        }
        self.w = w;
        for j in 0..self.m {
            self.mean0[j] = mean(&self.w[j * self.n..(j + 1) * self.n]);
        }
    }

    /// Appends one input node with zero weight everywhere: a newborn cell is
    /// connected to no unit until learning recruits it. Normalization targets
    /// are rebased to the new column count, so each unit's total weight mass
    /// is preserved by subsequent updates.
    pub fn push_input_node_zero(&mut self) {
        let old = self.n;
        self.n += 1;
        let mut w = Vec::with_capacity(self.m * self.n);
        for j in 0..self.m {
            w.extend_from_slice(&self.w[j * old..(j + 1) * old]);
            w.push(0.0);
        }
        self.w = w;
        for j in 0..self.m {
            self.mean0[j] = mean(&self.w[j * self.n..(j + 1) * self.n]);
        }
    }

    /// A unitless container over `n` input nodes; growth adds units as cells
    /// divide vertically.
    pub fn empty(n: usize, eta_learn: f64) -> Result<ProcessingUnits> {
        if n == 0 {
            return Err(Error::invalid("node count must be at least 1"));
        }
        if !(eta_learn > 0.0) || !eta_learn.is_finite() {
            return Err(Error::invalid("eta_learn must be positive and finite"));
        }
        Ok(ProcessingUnits {
            m: 0,
            n,
            eta_learn,
            w: Vec::new(),
            c: Vec::new(),
            z: Vec::new(),
            y_max: Vec::new(),
            mean0: Vec::new(),
        })
    }

    /// Appends one unit with an explicit weight vector (growth creates
    /// single-connection units pointing at the twin cell).
    pub fn push_unit(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.n {
            return Err(Error::invalid(format!(
                "unit weight vector has {} entries, layer has {} nodes",
                weights.len(),
                self.n
            )));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("unit weights must be finite and non-negative"));
        }
        self.mean0.push(mean(&weights));
        self.w.extend_from_slice(&weights);
        self.c.push(0.0);
        self.z.push(0);
        self.y_max.push(0.0);
        self.m += 1;
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn validate_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("unit and node counts must be at least 1"));
    }
    Ok(())
}

/// Fully connected units with weights drawn uniformly from (0,1).
pub fn init_units(m: usize, n: usize, seed: u64, eta_learn: f64) -> Result<ProcessingUnits> {
    validate_dims(m, n)?;
    if !(eta_learn > 0.0) || !eta_learn.is_finite() {
        return Err(Error::invalid("eta_learn must be positive and finite"));
    }
    let rng = CounterRng::new(seed, Stream::UnitInit);
    let mut w = Vec::with_capacity(m * n);
    for j in 0..m {
        for i in 0..n {
            w.push(rng.uniform_open(j as u64, i as u64));
        }
    }
    let mean0 = (0..m).map(|j| mean(&w[j * n..(j + 1) * n])).collect();
    Ok(ProcessingUnits {
        m,
        n,
        eta_learn,
        w,
        c: vec![0.0; m],
        z: vec![0; m],
        y_max: vec![0.0; m],
        mean0,
    })
}

/// Fully connected units whose initial weights decay with distance from a
/// per-unit center placed on a grid over the layer's bounding box. Used for
/// large layers where an unbiased start takes too long to localize.
pub fn init_units_biased(
    m: usize,
    geom: &LayerGeometry,
    seed: u64,
    eta_learn: f64,
    bias_len: f64,
) -> Result<ProcessingUnits> {
    validate_dims(m, geom.len())?;
    if !(bias_len > 0.0) || !bias_len.is_finite() {
        return Err(Error::invalid("bias_len must be positive and finite"));
    }
    let mut units = init_units(m, geom.len(), seed, eta_learn)?;
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in geom.positions() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    for j in 0..m {
        let center = [
            lo[0] + (hi[0] - lo[0]) * ((j % cols) as f64 + 0.5) / cols as f64,
            lo[1] + (hi[1] - lo[1]) * ((j / cols) as f64 + 0.5) / rows as f64,
        ];
        for i in 0..geom.len() {
            let p = geom.position(i);
            let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
            units.w[j * units.n + i] *= (-d / bias_len).exp();
        }
        units.mean0[j] = mean(units.weights(j));
    }
    Ok(units)
}

/// Winner-take-all pass over one step's spikes (given as sorted node ids).
/// The argmax runs on raw summed input; the winner stands only if it clears
/// its threshold, and ties go to the lowest unit index.
pub fn forward_wta(units: &ProcessingUnits, spiking: &[u32]) -> WinnerResult {
    if spiking.is_empty() || units.m == 0 {
        return WinnerResult::NONE;
    }
    let mut best = 0usize;
    let mut best_r = f64::MIN;
    for j in 0..units.m {
        let row = &units.w[j * units.n..(j + 1) * units.n];
        let r: f64 = spiking.iter().map(|&i| row[i as usize]).sum();
        if r > best_r {
            best_r = r;
            best = j;
        }
    }
    let activation = best_r - units.c[best];
    if activation > 0.0 {
        WinnerResult { winner: Some(best as u32), activation }
    } else {
        WinnerResult::NONE
    }
}

/// Reinforces the winner's weights toward the spiking nodes, then rescales
/// its whole weight vector so the mean returns to the normalization target.
pub fn hebbian_update(units: &mut ProcessingUnits, result: &WinnerResult, spiking: &[u32]) {
    let Some(j) = result.winner else { return };
    let j = j as usize;
    let row = &mut units.w[j * units.n..(j + 1) * units.n];
    let bump = units.eta_learn * result.activation;
    for &i in spiking {
        row[i as usize] += bump;
    }
    let new_mean = mean(row);
    if new_mean > 0.0 {
        let scale = units.mean0[j] / new_mean;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    units.z[j] = units.z[j].saturating_add(1);
    if result.activation > units.y_max[j] {
        units.y_max[j] = result.activation;
    }
}

/// Window-boundary threshold adaptation: at multiples of the window length,
/// units that won too rarely get their threshold set to a fraction of their
/// best-ever activation, and every window counter restarts.
pub fn update_thresholds(units: &mut ProcessingUnits, t: u64) {
    if t == 0 || t % THRESHOLD_WINDOW != 0 {
        return;
    }
    for j in 0..units.m {
        if units.z[j] < MIN_WINDOW_UPDATES {
            units.c[j] = units.y_max[j] / THRESHOLD_DIVISOR;
        }
        units.z[j] = 0;
    }
}

/// One (step, winner, activation) record per step that produced a winner.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizeRecord {
    pub step: u64,
    pub winner: u32,
    pub activation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrganizeTrace {
    pub records: Vec<OrganizeRecord>,
    pub steps_run: u64,
}

/// Runs the joint loop: one dynamics step, one winner-take-all pass, one
/// Hebbian update, then the periodic threshold update. `stop_when` sees the
/// step counter and current units after every step; returning true ends the
/// run early (convergence checks, step budgets).
pub fn self_organize<F>(
    state: &mut LayerState,
    coupling: &SynapticMatrix,
    noise: &NoiseParams,
    units: &mut ProcessingUnits,
    steps: u64,
    dt: f64,
    mut stop_when: F,
) -> Result<OrganizeTrace>
where
    F: FnMut(u64, &ProcessingUnits) -> bool,
{
    if units.inputs() != state.n() {
        return Err(Error::invalid(format!(
            "units expect {} input nodes, layer has {}",
            units.inputs(),
            state.n()
        )));
    }
    let mut trace = OrganizeTrace::default();
    for _ in 0..steps {
        step(state, coupling, noise, dt)?;
        let result = forward_wta(units, state.spiking());
        hebbian_update(units, &result, state.spiking());
        update_thresholds(units, state.t());
        if let Some(winner) = result.winner {
            trace.records.push(OrganizeRecord {
                step: state.t(),
                winner,
                activation: result.activation,
            });
        }
        trace.steps_run += 1;
        if stop_when(state.t(), units) {
            break;
        }
    }
    Ok(trace)
}

pub fn write_organize_csv<W: Write>(trace: &OrganizeTrace, mut out: W) -> Result<()> {
    out.write_all(b"step,winner,activation\n")?;
    for r in &trace.records {
        writeln!(out, "{},{},{}", r.step, r.winner, r.activation)?;
    }
    Ok(())
}

const WEIGHTS_MAGIC: &[u8; 4] = b"NGW1";
/// Upper bound on decoded weight elements; stops allocation bombs from a
/// corrupt header long before the 5 GB box runs out.
pub const WEIGHTS_DECODE_ELEM_LIMIT: usize = 1 << 27;

/// Binary weight matrix: magic, unit count, node count (both u32 LE), then
/// unit-major 64-bit little-endian floats.
pub fn encode_weights(units: &ProcessingUnits) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + units.w.len() * 8);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&u32::try_from(units.m).map_err(|_| Error::invalid("too many units"))?.to_le_bytes());
    out.extend_from_slice(&u32::try_from(units.n).map_err(|_| Error::invalid("too many nodes"))?.to_le_bytes());
    for v in &units.w {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    decode_weights_with_limit(bytes, WEIGHTS_DECODE_ELEM_LIMIT)
}

/// Returns (units, nodes, unit-major weights). Errors name the byte offset
/// of the first inconsistency.
pub fn decode_weights_with_limit(bytes: &[u8], max_elems: usize) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = bytes;
    let mut buf4 = [0u8; 4];
    let mut offset = 0u64;
    let mut take4 = |r: &mut &[u8], offset: &mut u64, what: &str| -> Result<u32> {
        r.read_exact(&mut buf4)
            .map_err(|_| Error::format(*offset, format!("truncated while reading {what}")))?;
        *offset += 4;
        Ok(u32::from_le_bytes(buf4))
    };
    let magic = take4(&mut r, &mut offset, "magic")?;
    if magic.to_le_bytes() != *WEIGHTS_MAGIC {
        return Err(Error::format(0, "bad magic, expected NGW1"));
    }
    let m = take4(&mut r, &mut offset, "unit count")? as usize;
    let n = take4(&mut r, &mut offset, "node count")? as usize;
    if m == 0 || n == 0 {
        return Err(Error::format(4, "unit and node counts must be at least 1"));
    }
    let elems = m
        .checked_mul(n)
        .filter(|&e| e <= max_elems)
        .ok_or(Error::SizeLimit {
            size: m.saturating_mul(n),
            limit: max_elems,
            hint: "weight matrix larger than the decode limit".into(),
        })?;
    if r.len() != elems * 8 {
        return Err(Error::format(
            offset + r.len().min(elems * 8) as u64,
            format!("expected {} weight bytes, found {}", elems * 8, r.len()),
        ));
    }
    let mut w = Vec::with_capacity(elems);
    for chunk in r.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(offset, "non-finite weight"));
        }
        offset += 8;
        w.push(v);
    }
    Ok((m, n, w))
}

/// Rebuilds units from decoded weights; thresholds and window counters start
/// fresh, normalization targets come from the stored rows.
pub fn units_from_weights(m: usize, n: usize, w: Vec<f64>, eta_learn: f64) -> Result<ProcessingUnits> {
    validate_dims(m, n)?;
    if w.len() != m * n {
        return Err(Error::invalid("weight vector length does not match dimensions"));
    }
    if w.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    let mean0 = (0..m).map(|j| mean(&w[j * n..(j + 1) * n])).collect();
    Ok(ProcessingUnits {
        m,
        n,
        eta_learn,
        w,
        c: vec![0.0; m],
        z: vec![0; m],
        y_max: vec![0.0; m],
        mean0,
    })
}

pub fn write_weights_csv<W: Write>(units: &ProcessingUnits, mut out: W) -> Result<()> {
    for j in 0..units.m {
        let row = units.weights(j);
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
