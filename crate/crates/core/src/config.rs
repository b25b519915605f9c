//! Simulation configuration and unit normalization.
//!
//! Measurement units are chosen so that the carrier wavelength and the
//! receiver-side constant `G/(N0*W)` are both 1. These are fixed by the
//! model, not configurable: with per-node power `P = n^(nu-1-gamma)` the
//! nominal single-link SNR is `SNR_s = n^(1-nu) * P = n^(-gamma)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Carrier wavelength in normalized units.
pub const LAMBDA: f64 = 1.0;
/// Friis constant over noise power `G/(N0*W)` in normalized units.
pub const G_OVER_N0W: f64 = 1.0;

/// All scheme and network parameters.
///
/// Ingested from a JSON document with keys exactly
/// `n, nu, epsilon, gamma, c1, c2, seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Node count.
    pub n: usize,
    /// Area exponent: the network square has area `A = n^nu`.
    pub nu: f64,
    /// Scheme slack epsilon.
    pub epsilon: f64,
    /// SNR exponent: `SNR_s = n^(-gamma)`.
    pub gamma: f64,
    /// Cluster-width constant; must satisfy `cos(pi/c1^2) > 0`.
    pub c1: f64,
    /// Pair-separation constant.
    pub c2: f64,
    /// Base RNG seed.
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        // c1 = 2 gives cos(pi/4) > 0; c2 = 1.
        Self {
            n: 1024,
            nu: 1.0,
            epsilon: 0.1,
            gamma: 1.0,
            c1: 2.0,
            c2: 1.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    /// Validates all invariants; call after construction or deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if !self.nu.is_finite() || self.nu <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "nu must be finite and > 0, got {}",
                self.nu
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !self.c1.is_finite() || self.c1 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "c1 must be > 0, got {}",
                self.c1
            )));
        }
        if (std::f64::consts::PI / (self.c1 * self.c1)).cos() <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "c1 = {} violates cos(pi/c1^2) > 0",
                self.c1
            )));
        }
        if !self.c2.is_finite() || self.c2 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "c2 must be > 0, got {}",
                self.c2
            )));
        }
        Ok(())
    }

    /// Parses a config from a JSON string; error messages name offending keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Network area `A = n^nu`.
    pub fn area(&self) -> f64 {
        (self.n as f64).powf(self.nu)
    }

    /// Network side length `L = n^(nu/2)`.
    pub fn side(&self) -> f64 {
        (self.n as f64).powf(self.nu / 2.0)
    }

    /// Per-node power `P = n^(nu - 1 - gamma)`.
    pub fn power(&self) -> f64 {
        (self.n as f64).powf(self.nu - 1.0 - self.gamma)
    }

    /// Nominal single-link SNR `SNR_s = n^(1-nu) * P = n^(-gamma)`.
    pub fn snr_s(&self) -> f64 {
        (self.n as f64).powf(-self.gamma)
    }

    /// Cluster vertical extent `n^(nu/4) / (2 c1)` (the short side of the
    /// facing-pair geometry; pairs stack along this axis).
    pub fn cluster_short_side(&self) -> f64 {
        (self.n as f64).powf(self.nu / 4.0) / (2.0 * self.c1)
    }

    /// Cluster horizontal extent `n^(nu/2) / 4` (the long side, along the
    /// beamforming axis).
    pub fn cluster_long_side(&self) -> f64 {
        (self.n as f64).powf(self.nu / 2.0) / 4.0
    }

    /// Cluster area `M`.
    pub fn cluster_area(&self) -> f64 {
        self.cluster_short_side() * self.cluster_long_side()
    }

    /// Horizontal separation `d = n^(nu/2) / 4` between the facing edges of a
    /// cluster pair.
    pub fn pair_separation(&self) -> f64 {
        (self.n as f64).powf(self.nu / 2.0) / 4.0
    }

    /// Vertical gap `c2 * n^(nu/4 + epsilon)` between adjacent active pairs.
    pub fn vertical_gap(&self) -> f64 {
        self.c2 * (self.n as f64).powf(self.nu / 4.0 + self.epsilon)
    }

    /// Expected node count per cluster, `M * n^(1-nu)`.
    pub fn nominal_occupancy(&self) -> f64 {
        self.cluster_area() * (self.n as f64).powf(1.0 - self.nu)
    }
}
