//! Numerical laboratory for broadcast capacity of line-of-sight wireless
//! networks at low SNR.
//!
//! The crate simulates the back-and-forth beamforming scheme between paired
//! clusters, computes the spectral-norm capacity upper bound, and provides
//! Monte Carlo / quadrature verification of the supporting concentration,
//! beamforming-gain, interference and trace-moment bounds.
//!
//! Everything is deterministic given a [`config::SimulationConfig`]: node
//! placement, schedules and Monte Carlo trials all derive from the configured
//! 64-bit seed (ChaCha8, one stream per trial, seeded with `seed ^ trial`),
//! independently of thread count.
//!
//! See the `examples/` directory for one runnable example per capability; the
//! thin `losnet` binary exposes the same pipelines as subcommands.

pub mod beamform;
pub mod channel;
pub mod cli;
pub mod config;
pub mod netgeom;
pub mod scaling;
pub mod spectral;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

use rand_chacha::rand_core::SeedableRng;

/// RNG stream derived from a base seed and a trial index.
///
/// All randomness in the crate flows through this so that parallel trials are
/// reproducible and independent of scheduling order.
pub fn derived_rng(seed: u64, trial: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ trial)
}
