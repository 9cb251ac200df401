//! Additive-noise link model and transmit-power accounting.
//!
//! Every directed use of an edge adds a fresh zero-mean noise vector with
//! per-coordinate variance `sigma2` and uncorrelated coordinates. The noise
//! family defaults to Gaussian; uniform and Laplace variants with the same
//! variance are available for robustness experiments since the convergence
//! guarantees depend only on the first two moments.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vector;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("noise variance must be nonnegative and finite, got {0}")]
    InvalidVariance(f64),
}

/// Zero-mean noise families normalized to a common variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    Uniform,
    Laplace,
}

/// Per-coordinate noise variance plus distribution family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    sigma2: f64,
    family: NoiseFamily,
}

impl ChannelSpec {
    pub fn new(sigma2: f64, family: NoiseFamily) -> Result<Self, ChannelError> {
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(ChannelError::InvalidVariance(sigma2));
        }
        Ok(ChannelSpec { sigma2, family })
    }

    pub fn noiseless() -> Self {
        ChannelSpec {
            sigma2: 0.0,
            family: NoiseFamily::Gaussian,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    /// Receives `s` through the link: returns `s + n` with `n` drawn fresh,
    /// i.i.d. across coordinates. A zero-variance channel is exact and draws
    /// nothing from the stream.
    pub fn transmit<R: Rng + ?Sized>(&self, s: &Vector, rng: &mut R) -> Vector {
        if self.sigma2 == 0.0 {
            return s.clone();
        }
        let mut out = s.clone();
        self.add_noise(&mut out, rng);
        out
    }

    /// In-place variant of [`ChannelSpec::transmit`].
    pub fn add_noise<R: Rng + ?Sized>(&self, s: &mut Vector, rng: &mut R) {
        if self.sigma2 == 0.0 {
            return;
        }
        let sigma = self.sigma2.sqrt();
        match self.family {
            NoiseFamily::Gaussian => {
                let normal = Normal::new(0.0, sigma).expect("sigma finite");
                for x in s.iter_mut() {
                    *x += normal.sample(rng);
                }
            }
            NoiseFamily::Uniform => {
                // U(-a, a) has variance a^2/3
                let a = sigma * 3.0f64.sqrt();
                for x in s.iter_mut() {
                    *x += a * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            NoiseFamily::Laplace => {
                // Laplace(b) has variance 2 b^2; inverse-CDF sampling
                let b = sigma / 2.0f64.sqrt();
                for x in s.iter_mut() {
                    let u: f64 = rng.random::<f64>() - 0.5;
                    *x -= b * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                }
            }
        }
    }
}

/// Per-node accumulator for `sum_k ||s(k)||_2^2` over transmitted signals.
///
/// Average power is the running total divided by the number of elapsed
/// iterations, matching the per-node transmit-power figure of merit.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLedger {
    totals: Vec<f64>,
    iterations: u64,
}

impl PowerLedger {
    pub fn new(nodes: usize) -> Self {
        PowerLedger {
            totals: vec![0.0; nodes],
            iterations: 0,
        }
    }

    /// Adds `||s||_2^2` to the sender's running total.
    pub fn record(&mut self, sender: usize, s: &Vector) {
        self.totals[sender] += s.norm_squared();
    }

    /// Marks one simulation round as elapsed.
    pub fn advance_iteration(&mut self) {
        self.iterations += 1;
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Average transmit power of one node: total / K. Zero before the first
    /// completed iteration.
    pub fn average_power(&self, node: usize) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.totals[node] / self.iterations as f64
        }
    }

    /// Largest per-node average power.
    pub fn max_average_power(&self) -> f64 {
        (0..self.totals.len())
            .map(|i| self.average_power(i))
            .fold(0.0, f64::max)
    }

    pub fn average_powers(&self) -> Vec<f64> {
        (0..self.totals.len())
            .map(|i| self.average_power(i))
            .collect()
    }
}

/// Upper bound on the per-node average transmit power of a run with
/// `alpha(k) = sqrt(c1) k^{tau/2}` and unsaturated quantizers of range `U`:
/// `n * d * c1 * U^2 * K^tau / (tau + 1)`.
pub fn power_bound(n: usize, d: usize, c1: f64, u: f64, tau: f64, horizon: u64) -> f64 {
    n as f64 * d as f64 * c1 * u * u * (horizon as f64).powf(tau) / (tau + 1.0)
}
