use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IpdError, Result};
use crate::seed;

/// `Y = sum_j beta_j Z_j + noise_sd * eps` with i.i.d. standard normal
/// features and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDgpConfig {
    pub n: usize,
    pub p: usize,
    pub noise_sd: f64,
    pub true_beta: Vec<f64>,
    pub seed: u64,
}

impl LinearDgpConfig {
    /// Ten features, unit coefficients, unit noise.
    pub fn standard(n: usize, seed: u64) -> Self {
        LinearDgpConfig { n, p: 10, noise_sd: 1.0, true_beta: alloc::vec![1.0; 10], seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(IpdError::InvalidConfig("dgp needs n >= 1 and p >= 1".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(IpdError::InvalidConfig("noise_sd must be >= 0".into()));
        }
        if self.true_beta.len() != self.p {
            return Err(IpdError::DimensionMismatch { expected: self.p, found: self.true_beta.len() });
        }
        Ok(())
    }
}

/// A simulated sample with the true outcome of every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSample {
    pub z: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl SimulatedSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub fn generate_linear_dgp(cfg: &LinearDgpConfig) -> Result<SimulatedSample> {
    cfg.validate()?;
    let mut rng = seed::rng_from_seed(cfg.seed);
    Ok(draw_linear(cfg, cfg.n, &mut rng))
}

/// Draws `n` rows from the model in `cfg` (its `n` and `seed` are ignored).
pub fn draw_linear<R: Rng + ?Sized>(cfg: &LinearDgpConfig, n: usize, rng: &mut R) -> SimulatedSample {
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..cfg.p).map(|_| StandardNormal.sample(rng)).collect();
        let eps: f64 = StandardNormal.sample(rng);
        let signal: f64 = row.iter().zip(&cfg.true_beta).map(|(a, b)| a * b).sum();
        y.push(signal + cfg.noise_sd * eps);
        z.push(row);
    }
    SimulatedSample { z, y }
}
