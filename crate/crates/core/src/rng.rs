//! Counter-based random number generation.
//!
//! Every draw is a pure function of `(seed, stream, a, b)`, so results do not
//! depend on evaluation order, thread count, or how many values other parts
//! of the simulation consumed. The typical keying is `a = step`, `b = node`
//! for per-step noise, or `a = node`, `b = field` for frozen per-node
//! parameters.
//!
//! The mixer is two rounds of the SplitMix64 finalizer, which passes the
//! usual statistical batteries and is plenty for simulation noise.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const WEYL: u64 = 0xD1B5_4A32_D192_ED03;

#[inline(always)]
fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substreams of one user-facing seed. Each stream sees an
/// unrelated sequence, so e.g. membrane noise never aliases unit
/// initialization even for the same counter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Frozen per-node Izhikevich reset parameters.
    NodeParams = 1,
    /// Per-step, per-node membrane noise.
    Noise = 2,
    /// Initial layer-II weight matrices.
    UnitInit = 3,
    /// Growth-model cell choices.
    Growth = 4,
    /// Initial conditions for rate-model searches and simulations.
    RateInit = 5,
    /// Rate-model noise.
    RateNoise = 6,
    /// Random readout and random-pooling weights in evaluation.
    EvalWeights = 7,
    /// Dataset shuffling and subset selection.
    Shuffle = 8,
    /// Random layer geometries.
    Layout = 9,
}

/// Stateless generator: a keyed hash from counters to samples.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let key = avalanche(seed.wrapping_add(GOLDEN).wrapping_mul(GOLDEN) ^ (stream as u64).wrapping_mul(WEYL));
        CounterRng { key }
    }

    /// Raw 64 uniform bits for counter pair `(a, b)`.
    #[inline(always)]
    pub fn raw(&self, a: u64, b: u64) -> u64 {
        let z = avalanche(self.key.wrapping_add(a.wrapping_mul(GOLDEN)));
        avalanche(z.wrapping_add(b.wrapping_mul(WEYL)))
    }

    /// Uniform in `[0, 1)`.
    #[inline(always)]
    pub fn uniform(&self, a: u64, b: u64) -> f64 {
        (self.raw(a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; never returns zero, safe to pass to `ln`.
    #[inline(always)]
    pub fn uniform_open(&self, a: u64, b: u64) -> f64 {
        ((self.raw(a, b) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline(always)]
    pub fn uniform_in(&self, a: u64, b: u64, lo: f64, hi: f64) -> f64 {
        lo + self.uniform(a, b) * (hi - lo)
    }

    /// Standard normal via Box-Muller. Consumes counters `(a, 2b)` and
    /// `(a, 2b + 1)`, so callers indexing `b` by node draw independent values
    /// per node.
    #[inline(always)]
    pub fn gaussian(&self, a: u64, b: u64) -> f64 {
        let u1 = self.uniform_open(a, 2 * b);
        let u2 = self.uniform(a, 2 * b + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `[0, n)` via widening multiply (no modulo bias).
    #[inline(always)]
    pub fn index(&self, a: u64, b: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.raw(a, b) as u128 * n as u128) >> 64) as usize
    }
}
