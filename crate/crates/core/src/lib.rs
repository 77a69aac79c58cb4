//! Simulation library for a layered neural network that grows from a single
//! cell and self-organizes its inter-layer connectivity into a pooling
//! architecture, driven only by spontaneous activity and a local
//! winner-take-all learning rule.
//!
//! The crate is organized around the stages of that pipeline:
//!
//! - [`topology`]: spatial layouts of layer I and the distance-dependent
//!   coupling matrix (local excitation, global decaying inhibition).
//! - [`dynamics`]: spiking dynamics of layer I under intrinsic noise, plus
//!   spike raster recording and serialization.
//! - [`plasticity`]: layer-II processing units, winner-take-all competition,
//!   Hebbian weight updates with mean normalization, and adaptive thresholds.
//! - [`growth`]: the developmental model that grows both layers from a single
//!   progenitor cell under local division rules.
//! - [`analysis`]: traveling-wave detection, pool extraction and tiling
//!   metrics, the reduced rate-model fixed-point analysis, and size scaling.
//! - [`eval`]: MNIST-based functional evaluation of learned pooling layers
//!   against hand-crafted and random baselines.
//!
//! All stochastic behavior flows through [`rng::CounterRng`], a counter-based
//! generator, so every simulation is a pure function of its seed.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod growth;
pub mod plasticity;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
