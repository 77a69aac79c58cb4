//! Spatial layouts of the sensor layer and the distance-dependent coupling
//! between its nodes: uniform excitation out to a short radius, a dead zone,
//! then exponentially decaying inhibition from every farther node.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::rng::{CounterRng, Stream};

/// Euclidean distance. Every distance in the crate goes through this one
/// function so alternative matrix storages stay bit-identical.
#[inline(always)]
pub fn distance(p: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    (dx * dx + dy * dy).sqrt()
}

/// Intra-layer coupling profile.
///
/// Pairs closer than `excitation_radius` couple with weight
/// `excitation_weight`; pairs beyond `inhibition_radius` couple with
/// `inhibition_magnitude * exp(-d / inhibition_decay_len)`; the band in
/// between carries zero weight. Distances exactly at either radius fall on
/// the excitatory and inhibitory side respectively.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TopologyParams {
    pub excitation_radius: f64,
    pub inhibition_radius: f64,
    pub excitation_weight: f64,
    pub inhibition_magnitude: f64,
    pub inhibition_decay_len: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            excitation_radius: 2.0,
            inhibition_radius: 4.0,
            excitation_weight: 5.0,
            inhibition_magnitude: -2.0,
            inhibition_decay_len: 10.0,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.excitation_radius > 0.0 && self.inhibition_radius > self.excitation_radius) {
            return Err(Error::invalid(format!(
                "radii must satisfy 0 < excitation ({}) < inhibition ({})",
                self.excitation_radius, self.inhibition_radius
            )));
        }
        // Zero couplings are allowed so the rate analysis can probe the
        // uncoupled edge case.
        if !self.excitation_weight.is_finite() || self.excitation_weight < 0.0 {
            return Err(Error::invalid("excitation weight must be non-negative"));
        }
        if !self.inhibition_magnitude.is_finite() || self.inhibition_magnitude > 0.0 {
            return Err(Error::invalid("inhibition magnitude must be non-positive"));
        }
        if self.inhibition_decay_len <= 0.0 {
            return Err(Error::invalid("inhibition decay length must be positive"));
        }
        Ok(())
    }
}

/// Coupling strength between two distinct nodes at distance `d > 0`.
/// Callers handle the self-coupling (always zero) themselves.
#[inline(always)]
pub fn coupling_from_distance(d: f64, p: &TopologyParams) -> f64 {
    if d <= p.excitation_radius {
        p.excitation_weight
    } else if d < p.inhibition_radius {
        0.0
    } else {
        p.inhibition_magnitude * (-d / p.inhibition_decay_len).exp()
    }
}

/// Node positions of one layer plus per-node alive flags.
///
/// Ablated nodes keep their index so maps computed before and after damage
/// stay directly comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGeometry {
    positions: Vec<[f64; 2]>,
    alive: Vec<bool>,
    scaffold_id: String,
}

impl LayerGeometry {
    pub fn from_positions(positions: Vec<[f64; 2]>, scaffold_id: impl Into<String>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("geometry needs at least one node"));
        }
        for p in &positions {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::invalid("node positions must be finite"));
            }
        }
        let alive = vec![true; positions.len()];
        Ok(LayerGeometry {
            positions,
            alive,
            scaffold_id: scaffold_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> [f64; 2] {
        self.positions[i]
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    pub fn alive_flags(&self) -> &[bool] {
        &self.alive
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn alive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    pub fn scaffold_id(&self) -> &str {
        &self.scaffold_id
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.positions[i], self.positions[j])
    }

    /// Appends a node (used by the growth model). Returns its index.
    pub fn push_node(&mut self, position: [f64; 2]) -> usize {
        self.positions.push(position);
        self.alive.push(true);
        self.positions.len() - 1
    }

    /// Returns a copy with the listed nodes marked dead. Re-ablating an
    /// already dead node is a no-op, so the operation is idempotent.
    pub fn ablate_nodes(&self, ids: &[u32]) -> Result<LayerGeometry> {
        let mut out = self.clone();
        for &id in ids {
            let i = id as usize;
            if i >= out.alive.len() {
                return Err(Error::invalid(format!(
                    "ablation id {id} out of range (node count {})",
                    out.alive.len()
                )));
            }
            out.alive[i] = false;
        }
        Ok(out)
    }

    /// Sorted alive-neighbor lists within `radius` (self excluded, dead nodes
    /// get empty lists). Built with a bucket grid, O(N · k).
    pub fn radius_neighbors(&self, radius: f64) -> Vec<Vec<u32>> {
        let n = self.len();
        let mut out = vec![Vec::new(); n];
        if radius <= 0.0 {
            return out;
        }
        let cell = |p: [f64; 2]| -> (i64, i64) {
            ((p[0] / radius).floor() as i64, (p[1] / radius).floor() as i64)
        };
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for i in 0..n {
            if self.alive[i] {
                buckets.entry(cell(self.positions[i])).or_default().push(i as u32);
            }
        }
        for i in 0..n {
            if !self.alive[i] {
                continue;
            }
            let (cx, cy) = cell(self.positions[i]);
            let mut near = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(b) = buckets.get(&(cx + dx, cy + dy)) {
                        for &j in b {
                            if j as usize != i
                                && self.distance(i, j as usize) <= radius
                            {
                                near.push(j);
                            }
                        }
                    }
                }
            }
            near.sort_unstable();
            out[i] = near;
        }
        out
    }
}

/// Breadth-first patch of `count` alive nodes reachable from `start` through
/// the `radius`-neighborhood graph. Used to pick contiguous ablation targets.
pub fn contiguous_region(
    geom: &LayerGeometry,
    start: u32,
    count: usize,
    radius: f64,
) -> Result<Vec<u32>> {
    let s = start as usize;
    if s >= geom.len() || !geom.is_alive(s) {
        return Err(Error::invalid(format!("start node {start} missing or dead")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let neighbors = geom.radius_neighbors(radius);
    let mut visited = vec![false; geom.len()];
    let mut queue = std::collections::VecDeque::from([start]);
    visited[s] = true;
    let mut region = Vec::with_capacity(count);
    while let Some(i) = queue.pop_front() {
        region.push(i);
        if region.len() == count {
            return Ok(region);
        }
        for &j in &neighbors[i as usize] {
            if !visited[j as usize] {
                visited[j as usize] = true;
                queue.push_back(j);
            }
        }
    }
    Err(Error::invalid(format!(
        "only {} alive nodes reachable from {start}, need {count}",
        region.len()
    )))
}

pub fn build_grid_layer(rows: usize, cols: usize, spacing: f64) -> Result<LayerGeometry> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid needs at least one row and column"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid("grid spacing must be positive"));
    }
    let mut positions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            positions.push([c as f64 * spacing, r as f64 * spacing]);
        }
    }
    LayerGeometry::from_positions(positions, format!("grid{rows}x{cols}"))
}

pub fn build_line_layer(n: usize, spacing: f64) -> Result<LayerGeometry> {
    if n == 0 {
        return Err(Error::invalid("line needs at least one node"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid("line spacing must be positive"));
    }
    let positions = (0..n).map(|i| [i as f64 * spacing, 0.0]).collect();
    LayerGeometry::from_positions(positions, format!("line{n}"))
}

/// Random positions in a `side × side` square with pairwise separation of at
/// least `min_sep`, rejection-sampled deterministically from the seed.
pub fn build_random_layer(n: usize, side: f64, min_sep: f64, seed: u64) -> Result<LayerGeometry> {
    if n == 0 {
        return Err(Error::invalid("layout needs at least one node"));
    }
    if !(side > 0.0) || min_sep < 0.0 {
        return Err(Error::invalid("side must be positive and min_sep non-negative"));
    }
    let rng = CounterRng::new(seed, Stream::Layout);
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut attempt: u64 = 0;
    let max_attempts = 10_000 * n as u64;
    while positions.len() < n {
        if attempt >= max_attempts {
            return Err(Error::invalid(format!(
                "could not place {n} nodes with separation {min_sep} in side {side}"
            )));
        }
        let p = [
            rng.uniform_in(attempt, 0, 0.0, side),
            rng.uniform_in(attempt, 1, 0.0, side),
        ];
        attempt += 1;
        if positions.iter().all(|&q| distance(p, q) >= min_sep.max(1e-9)) {
            positions.push(p);
        }
    }
    LayerGeometry::from_positions(positions, format!("random{n}"))
}

/// Rectangular occupancy mask; true cells become nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn full(rows: usize, cols: usize) -> Result<Mask> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("mask needs at least one row and column"));
        }
        Ok(Mask {
            rows,
            cols,
            cells: vec![true; rows * cols],
        })
    }

    /// Lattice annulus: cells whose center distance r from the middle
    /// satisfies `inner < r <= outer`.
    pub fn annulus(outer: f64, inner: f64) -> Result<Mask> {
        if !(outer > inner && inner >= 0.0) {
            return Err(Error::invalid("annulus needs outer > inner >= 0"));
        }
        let half = outer.ceil() as i64;
        let side = (2 * half + 1) as usize;
        let mut cells = vec![false; side * side];
        for r in -half..=half {
            for c in -half..=half {
                let d = ((r * r + c * c) as f64).sqrt();
                if d > inner && d <= outer {
                    cells[((r + half) as usize) * side + (c + half) as usize] = true;
                }
            }
        }
        Ok(Mask {
            rows: side,
            cols: side,
            cells,
        })
    }

    /// Parses the plain-text grid format: `#` marks a node, `.` an empty
    /// cell, one row per line. Ragged rows are padded with empty cells.
    pub fn from_text(text: &str) -> Result<Mask> {
        let mut grid: Vec<Vec<bool>> = Vec::new();
        let mut row: Vec<bool> = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'#' => row.push(true),
                b'.' => row.push(false),
                b'\n' => grid.push(std::mem::take(&mut row)),
                b'\r' if bytes.get(i + 1) == Some(&b'\n') => {}
                other => {
                    return Err(Error::format(
                        i as u64,
                        format!("unexpected byte 0x{other:02x}, expected '#', '.', or newline"),
                    ));
                }
            }
            i += 1;
        }
        if !row.is_empty() {
            grid.push(row);
        }
        if grid.is_empty() {
            return Err(Error::format(0, "mask text contains no rows"));
        }
        let rows = grid.len();
        let cols = grid.iter().map(Vec::len).max().unwrap_or(0);
        if cols == 0 {
            return Err(Error::format(0, "mask text contains no cells"));
        }
        let mut cells = vec![false; rows * cols];
        for (r, line) in grid.iter().enumerate() {
            for (c, &v) in line.iter().enumerate() {
                cells[r * cols + c] = v;
            }
        }
        Ok(Mask { rows, cols, cells })
    }

    /// Parses the JSON array-of-arrays format where 1 marks a node.
    pub fn from_json(bytes: &[u8]) -> Result<Mask> {
        let grid: Vec<Vec<u8>> = serde_json::from_slice(bytes)
            .map_err(|e| Error::format(json_error_offset(bytes, &e), e.to_string()))?;
        if grid.is_empty() {
            return Err(Error::format(0, "mask JSON contains no rows"));
        }
        let rows = grid.len();
        let cols = grid.iter().map(Vec::len).max().unwrap_or(0);
        if cols == 0 {
            return Err(Error::format(0, "mask JSON contains no cells"));
        }
        let mut cells = vec![false; rows * cols];
        for (r, line) in grid.iter().enumerate() {
            for (c, &v) in line.iter().enumerate() {
                match v {
                    0 => {}
                    1 => cells[r * cols + c] = true,
                    other => {
                        return Err(Error::invalid(format!(
                            "mask JSON cell ({r},{c}) is {other}, expected 0 or 1"
                        )));
                    }
                }
            }
        }
        Ok(Mask { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_set(&self, r: usize, c: usize) -> bool {
        r < self.rows && c < self.cols && self.cells[r * self.cols + c]
    }

    pub fn count_set(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }
}

fn json_error_offset(bytes: &[u8], e: &serde_json::Error) -> u64 {
    // serde_json reports 1-based line/column; convert to a byte offset.
    let (line, col) = (e.line(), e.column());
    if line == 0 {
        return 0;
    }
    let mut remaining = line - 1;
    let mut offset = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    (offset + col.saturating_sub(1)).min(bytes.len()) as u64
}

pub fn build_geometry_from_mask(mask: &Mask, spacing: f64) -> Result<LayerGeometry> {
    if !(spacing > 0.0) {
        return Err(Error::invalid("mask spacing must be positive"));
    }
    let mut positions = Vec::with_capacity(mask.count_set());
    for r in 0..mask.rows {
        for c in 0..mask.cols {
            if mask.is_set(r, c) {
                positions.push([c as f64 * spacing, r as f64 * spacing]);
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::invalid("mask has no set cells"));
    }
    LayerGeometry::from_positions(positions, format!("mask{}x{}", mask.rows, mask.cols))
}

/// Upper node count for dense N×N storage; larger layers switch to the
/// analytic form that recomputes couplings from positions on demand.
pub const DENSE_NODE_LIMIT: usize = 5000;

#[derive(Debug, Clone)]
enum MatrixStorage {
    Dense(Vec<f64>),
    Analytic,
}

/// Intra-layer coupling matrix. Entries are a pure function of node
/// distance, zero on the diagonal and zero through dead nodes, so both
/// storages produce bit-identical results.
#[derive(Debug, Clone)]
pub struct SynapticMatrix {
    n: usize,
    params: TopologyParams,
    positions: Vec<[f64; 2]>,
    alive: Vec<bool>,
    storage: MatrixStorage,
}

impl SynapticMatrix {
    pub fn build(geom: &LayerGeometry, params: &TopologyParams) -> Result<SynapticMatrix> {
        Self::build_with_limit(geom, params, DENSE_NODE_LIMIT)
    }

    /// `dense_limit` caps the node count for dense storage; above it the
    /// matrix stays analytic.
    pub fn build_with_limit(
        geom: &LayerGeometry,
        params: &TopologyParams,
        dense_limit: usize,
    ) -> Result<SynapticMatrix> {
        params.validate()?;
        if geom.is_empty() {
            return Err(Error::invalid("geometry is empty"));
        }
        let n = geom.len();
        let storage = if n <= dense_limit {
            let mut w = vec![0.0; n * n];
            for i in 0..n {
                if !geom.is_alive(i) {
                    continue;
                }
                let pi = geom.position(i);
                for j in 0..n {
                    if j != i && geom.is_alive(j) {
                        w[i * n + j] = coupling_from_distance(distance(pi, geom.position(j)), params);
                    }
                }
            }
            MatrixStorage::Dense(w)
        } else {
            MatrixStorage::Analytic
        };
        Ok(SynapticMatrix {
            n,
            params: *params,
            positions: geom.positions().to_vec(),
            alive: geom.alive_flags().to_vec(),
            storage,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &TopologyParams {
        &self.params
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, MatrixStorage::Dense(_))
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            MatrixStorage::Dense(w) => w[i * self.n + j],
            MatrixStorage::Analytic => {
                if i == j || !self.alive[i] || !self.alive[j] {
                    0.0
                } else {
                    coupling_from_distance(
                        distance(self.positions[i], self.positions[j]),
                        &self.params,
                    )
                }
            }
        }
    }

    /// Appends one alive node, producing the same matrix a fresh build over
    /// the extended geometry would (entries are pure distance functions).
    /// Returns the new node's index.
    pub fn push_node(&mut self, position: [f64; 2]) -> usize {
        let old = self.n;
        let new = old + 1;
        if let MatrixStorage::Dense(w) = &mut self.storage {
            let mut grown = vec![0.0; new * new];
            for i in 0..old {
                grown[i * new..i * new + old].copy_from_slice(&w[i * old..(i + 1) * old]);
                if self.alive[i] {
                    let c = coupling_from_distance(distance(self.positions[i], position), &self.params);
                    grown[i * new + old] = c;
                    grown[old * new + i] = c;
                }
            }
            *w = grown;
        }
        self.positions.push(position);
        self.alive.push(true);
        self.n = new;
        old
    }

    /// Writes the summed input `out[i] = Σ_{j ∈ spiking} S[i][j]`.
    ///
    /// `spiking` must be strictly ascending. Both storages accumulate in the
    /// same ascending-j order per target node, keeping results bit-identical.
    pub fn accumulate_drive(&self, spiking: &[u32], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n);
        debug_assert!(spiking.windows(2).all(|w| w[0] < w[1]));
        out.fill(0.0);
        match &self.storage {
            MatrixStorage::Dense(w) => {
                // S is symmetric, so row j supplies S[i][j] for all i.
                for &j in spiking {
                    let row = &w[j as usize * self.n..(j as usize + 1) * self.n];
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o += v;
                    }
                }
            }
            MatrixStorage::Analytic => {
                for &j in spiking {
                    let j = j as usize;
                    if !self.alive[j] {
                        continue;
                    }
                    let pj = self.positions[j];
                    for i in 0..self.n {
                        if i != j && self.alive[i] {
                            out[i] +=
                                coupling_from_distance(distance(self.positions[i], pj), &self.params);
                        }
                    }
                }
            }
        }
    }
}

/// Writes geometry as CSV `id,x,y,alive` (alive as 1/0).
pub fn write_geometry_csv(geom: &LayerGeometry, out: &mut impl Write) -> Result<()> {
    writeln!(out, "id,x,y,alive")?;
    for i in 0..geom.len() {
        let p = geom.position(i);
        writeln!(out, "{i},{},{},{}", p[0], p[1], u8::from(geom.is_alive(i)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> TopologyParams {
        TopologyParams::default()
    }

    #[test]
    fn grid_single_node_at_origin() {
        let g = build_grid_layer(1, 1, 1.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.position(0), [0.0, 0.0]);
    }

    #[test]
    fn grid_two_by_two_max_distance() {
        let g = build_grid_layer(2, 2, 1.0).unwrap();
        assert_eq!(g.len(), 4);
        let mut max_d: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                max_d = max_d.max(g.distance(i, j));
            }
        }
        assert!((max_d - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_counts_and_errors() {
        assert_eq!(build_grid_layer(30, 30, 1.0).unwrap().len(), 900);
        assert!(build_grid_layer(0, 5, 1.0).is_err());
        assert!(build_grid_layer(5, 0, 1.0).is_err());
        assert!(build_grid_layer(5, 5, 0.0).is_err());
    }

    #[test]
    fn distance_is_symmetric() {
        let g = build_random_layer(20, 10.0, 0.1, 3).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(g.distance(i, j).to_bits(), g.distance(j, i).to_bits());
            }
        }
    }

    #[test]
    fn coupling_piecewise_values() {
        let p = defaults();
        // Two nodes at distance 1: excitation.
        assert_eq!(coupling_from_distance(1.0, &p), 5.0);
        // Exactly at the excitation radius: still excitation.
        assert_eq!(coupling_from_distance(2.0, &p), 5.0);
        // Dead zone.
        assert_eq!(coupling_from_distance(3.0, &p), 0.0);
        assert_eq!(coupling_from_distance(3.999, &p), 0.0);
        // Exactly at the inhibition radius: inhibition applies.
        assert_eq!(coupling_from_distance(4.0, &p), -2.0 * (-0.4_f64).exp());
        // Spot value at distance 10.
        let v = coupling_from_distance(10.0, &p);
        assert!((v - (-2.0 * (-1.0_f64).exp())).abs() < 1e-12);
        assert!((v - (-0.7357588823)).abs() < 1e-9);
    }

    #[test]
    fn matrix_matches_formula_everywhere() {
        let g = build_grid_layer(7, 7, 1.0).unwrap();
        let p = defaults();
        let m = SynapticMatrix::build(&g, &p).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                let expect = if i == j {
                    0.0
                } else {
                    coupling_from_distance(g.distance(i, j), &p)
                };
                assert_eq!(m.coupling(i, j).to_bits(), expect.to_bits());
            }
        }
    }

    #[test]
    fn matrix_symmetric_and_zero_diagonal() {
        let g = build_random_layer(30, 12.0, 0.3, 11).unwrap();
        let m = SynapticMatrix::build(&g, &defaults()).unwrap();
        for i in 0..g.len() {
            assert_eq!(m.coupling(i, i), 0.0);
            for j in 0..g.len() {
                assert_eq!(m.coupling(i, j).to_bits(), m.coupling(j, i).to_bits());
            }
        }
    }

    #[test]
    fn two_node_examples() {
        for (d, expect) in [(1.0, 5.0), (3.0, 0.0), (10.0, -2.0 * (-1.0_f64).exp())] {
            let g = LayerGeometry::from_positions(vec![[0.0, 0.0], [d, 0.0]], "pair").unwrap();
            let m = SynapticMatrix::build(&g, &defaults()).unwrap();
            assert_eq!(m.coupling(0, 1), expect);
            assert_eq!(m.coupling(1, 0), expect);
        }
    }

    #[test]
    fn invalid_radii_rejected() {
        let g = build_grid_layer(2, 2, 1.0).unwrap();
        let mut p = defaults();
        p.inhibition_radius = p.excitation_radius;
        assert!(SynapticMatrix::build(&g, &p).is_err());
    }

    #[test]
    fn ablation_zeroes_rows_and_columns() {
        let g = build_grid_layer(5, 5, 1.0).unwrap();
        let ablated = g.ablate_nodes(&[7, 12]).unwrap();
        assert_eq!(ablated.alive_count(), 23);
        let m = SynapticMatrix::build(&ablated, &defaults()).unwrap();
        for k in [7usize, 12] {
            for j in 0..g.len() {
                assert_eq!(m.coupling(k, j), 0.0);
                assert_eq!(m.coupling(j, k), 0.0);
            }
        }
    }

    #[test]
    fn ablation_is_idempotent_and_checked() {
        let g = build_grid_layer(3, 3, 1.0).unwrap();
        let once = g.ablate_nodes(&[4]).unwrap();
        let twice = once.ablate_nodes(&[4]).unwrap();
        assert_eq!(once, twice);
        assert_eq!(g.ablate_nodes(&[]).unwrap(), g);
        assert!(g.ablate_nodes(&[9]).is_err());
    }

    #[test]
    fn total_ablation_zeroes_matrix() {
        let g = build_grid_layer(3, 3, 1.0).unwrap();
        let ids: Vec<u32> = (0..9).collect();
        let dead = g.ablate_nodes(&ids).unwrap();
        let m = SynapticMatrix::build(&dead, &defaults()).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(m.coupling(i, j), 0.0);
            }
        }
    }

    #[test]
    fn ablate_25_of_900_grid() {
        let g = build_grid_layer(30, 30, 1.0).unwrap();
        let region = contiguous_region(&g, 435, 25, 2.0).unwrap();
        assert_eq!(region.len(), 25);
        let ablated = g.ablate_nodes(&region).unwrap();
        assert_eq!(ablated.alive_count(), 875);
    }

    #[test]
    fn dense_and_analytic_agree_bitwise() {
        let g = build_random_layer(60, 15.0, 0.2, 42).unwrap();
        let g = g.ablate_nodes(&[3, 17, 44]).unwrap();
        let p = defaults();
        let dense = SynapticMatrix::build_with_limit(&g, &p, usize::MAX).unwrap();
        let analytic = SynapticMatrix::build_with_limit(&g, &p, 0).unwrap();
        assert!(dense.is_dense());
        assert!(!analytic.is_dense());
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(
                    dense.coupling(i, j).to_bits(),
                    analytic.coupling(i, j).to_bits()
                );
            }
        }
        let rng = CounterRng::new(9, Stream::Layout);
        for trial in 0..20u64 {
            let spiking: Vec<u32> = (0..g.len() as u32)
                .filter(|&i| rng.uniform(trial, i as u64) < 0.2)
                .collect();
            let mut a = vec![0.0; g.len()];
            let mut b = vec![0.0; g.len()];
            dense.accumulate_drive(&spiking, &mut a);
            analytic.accumulate_drive(&spiking, &mut b);
            for i in 0..g.len() {
                assert_eq!(a[i].to_bits(), b[i].to_bits(), "node {i} trial {trial}");
            }
        }
    }

    #[test]
    fn incremental_node_append_matches_fresh_build() {
        let mut geom = build_random_layer(30, 8.0, 0.3, 7).unwrap();
        let p = defaults();
        let mut dense = SynapticMatrix::build_with_limit(&geom, &p, usize::MAX).unwrap();
        let mut analytic = SynapticMatrix::build_with_limit(&geom, &p, 0).unwrap();
        let rng = CounterRng::new(11, Stream::Layout);
        for k in 0..12u64 {
            let pos = [rng.uniform(k, 0) * 8.0, rng.uniform(k, 1) * 8.0];
            let idx = geom.push_node(pos);
            assert_eq!(dense.push_node(pos), idx);
            assert_eq!(analytic.push_node(pos), idx);
        }
        let fresh = SynapticMatrix::build_with_limit(&geom, &p, usize::MAX).unwrap();
        assert!(dense.is_dense());
        for i in 0..geom.len() {
            for j in 0..geom.len() {
                assert_eq!(dense.coupling(i, j).to_bits(), fresh.coupling(i, j).to_bits());
                assert_eq!(analytic.coupling(i, j).to_bits(), fresh.coupling(i, j).to_bits());
            }
        }
    }

    #[test]
    fn drive_matches_row_sums() {
        let g = build_grid_layer(6, 6, 1.0).unwrap();
        let m = SynapticMatrix::build(&g, &defaults()).unwrap();
        let spiking = vec![0u32, 7, 14, 35];
        let mut drive = vec![0.0; g.len()];
        m.accumulate_drive(&spiking, &mut drive);
        for i in 0..g.len() {
            let expect: f64 = spiking.iter().map(|&j| m.coupling(i, j as usize)).sum();
            assert!((drive[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_text_roundtrip_geometry() {
        let mask = Mask::from_text("##.\n.#.\n..#\n").unwrap();
        assert_eq!(mask.rows(), 3);
        assert_eq!(mask.cols(), 3);
        assert_eq!(mask.count_set(), 4);
        let g = build_geometry_from_mask(&mask, 1.0).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.position(0), [0.0, 0.0]);
        assert_eq!(g.position(1), [1.0, 0.0]);
        assert_eq!(g.position(2), [1.0, 1.0]);
        assert_eq!(g.position(3), [2.0, 2.0]);
    }

    #[test]
    fn mask_text_rejects_bad_bytes_with_offset() {
        let err = Mask::from_text("##\n#x\n").unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mask_text_handles_crlf_and_ragged_rows() {
        let mask = Mask::from_text("#\r\n###\r\n").unwrap();
        assert_eq!(mask.rows(), 2);
        assert_eq!(mask.cols(), 3);
        assert_eq!(mask.count_set(), 4);
        assert!(mask.is_set(0, 0));
        assert!(!mask.is_set(0, 1));
    }

    #[test]
    fn full_mask_equals_grid() {
        let mask = Mask::full(3, 3).unwrap();
        let from_mask = build_geometry_from_mask(&mask, 1.0).unwrap();
        let grid = build_grid_layer(3, 3, 1.0).unwrap();
        assert_eq!(from_mask.positions(), grid.positions());
    }

    #[test]
    fn single_cell_mask() {
        let mask = Mask::from_text("#\n").unwrap();
        let g = build_geometry_from_mask(&mask, 1.0).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn empty_mask_rejected() {
        let mask = Mask::from_text("...\n...\n").unwrap();
        assert!(build_geometry_from_mask(&mask, 1.0).is_err());
    }

    #[test]
    fn annulus_matches_lattice_count() {
        let mask = Mask::annulus(10.0, 5.0).unwrap();
        // Independent count of lattice points with 5 < sqrt(x^2+y^2) <= 10.
        let mut expect = 0;
        for x in -10i64..=10 {
            for y in -10i64..=10 {
                let d2 = x * x + y * y;
                if d2 > 25 && d2 <= 100 {
                    expect += 1;
                }
            }
        }
        assert_eq!(mask.count_set(), expect);
        let g = build_geometry_from_mask(&mask, 1.0).unwrap();
        assert_eq!(g.len(), expect);
    }

    #[test]
    fn mask_json_parses_and_validates() {
        let mask = Mask::from_json(b"[[1,0],[0,1]]").unwrap();
        assert_eq!(mask.count_set(), 2);
        assert!(Mask::from_json(b"[[1,2]]").is_err());
        assert!(Mask::from_json(b"not json").is_err());
        assert!(Mask::from_json(b"[]").is_err());
        assert!(Mask::from_json(b"{\"a\":1}").is_err());
    }

    #[test]
    fn json_errors_carry_sane_offsets() {
        let input = b"[[1,0],\n [0,oops]]";
        match Mask::from_json(input).unwrap_err() {
            Error::Format { offset, .. } => {
                assert!(offset as usize <= input.len());
                assert!(offset >= 8, "offset {offset} should be on line 2");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn radius_neighbors_matches_bruteforce() {
        let g = build_random_layer(50, 12.0, 0.2, 7).unwrap();
        let g = g.ablate_nodes(&[5, 6]).unwrap();
        let fast = g.radius_neighbors(2.0);
        for i in 0..g.len() {
            let mut brute: Vec<u32> = (0..g.len() as u32)
                .filter(|&j| {
                    j as usize != i
                        && g.is_alive(i)
                        && g.is_alive(j as usize)
                        && g.distance(i, j as usize) <= 2.0
                })
                .collect();
            brute.sort_unstable();
            assert_eq!(fast[i], brute, "node {i}");
        }
    }

    #[test]
    fn contiguous_region_is_connected_and_sized() {
        let g = build_grid_layer(10, 10, 1.0).unwrap();
        let region = contiguous_region(&g, 0, 20, 1.5).unwrap();
        assert_eq!(region.len(), 20);
        // Every node after the first must be adjacent to an earlier one.
        for (k, &i) in region.iter().enumerate().skip(1) {
            let near = region[..k]
                .iter()
                .any(|&j| g.distance(i as usize, j as usize) <= 1.5);
            assert!(near, "node {i} disconnected from earlier region");
        }
    }

    #[test]
    fn geometry_csv_format() {
        let g = build_grid_layer(1, 2, 1.0).unwrap();
        let g = g.ablate_nodes(&[1]).unwrap();
        let mut buf = Vec::new();
        write_geometry_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id,x,y,alive\n0,0,0,1\n1,1,0,0\n");
    }
}
