//! Confidence, power-control, and step-size sequences.
//!
//! The three geometric sequences driving the algorithm are
//!
//! * `alpha(k) = sqrt(c1) k^{tau/2}` — transmit-amplitude (power-control),
//! * `beta(k)  = c0 k^{-gamma}`      — confidence placed on neighbor
//!   estimates during consensus,
//! * `eta(k)   = R sqrt(1 - lambda) / (4 xi k^{(1+gamma)/2})` — projection
//!   step size,
//!
//! tied together by `tau + 2 gamma = 1`. That coupling is exactly what keeps
//! the decoded channel noise accumulated in the neighbor estimates at
//! bounded variance: the running discrepancy between a transmitter's proxy
//! and the receiver's estimate is `sum_l n(l) / alpha(l)`, and the consensus
//! step scales it by `beta(k)`, so boundedness needs
//! `sum_l alpha(l)^{-2} = Theta(beta(k)^{-2})`.
//!
//! `xi^2 = Omega^2 + c0^2 Delta^2 d / 4 + c0^2 sigma^2 d / (2 gamma c1)` is
//! the variance of the effective stochastic subgradient (oracle noise plus
//! quantization dither plus accumulated channel noise).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("gamma must lie in (0, 0.5], got {0}")]
    GammaOutOfRange(f64),
    #[error("c0 must be at least 1, got {0}")]
    InvalidC0(f64),
    #[error("c1 must be positive, got {0}")]
    InvalidC1(f64),
    #[error("{name} must be nonnegative and finite, got {value}")]
    InvalidVarianceInput { name: &'static str, value: f64 },
    #[error("r_prox must be positive and finite, got {0}")]
    InvalidRProx(f64),
    #[error("lambda must lie in [0, 1), got {0}")]
    LambdaOutOfRange(f64),
    #[error(
        "xi = 0: no stochasticity at all (Omega = Delta = sigma = 0); the \
         geometric step-size schedule is undefined, supply a constant step \
         size instead"
    )]
    DegenerateXi,
}

/// Inputs to [`ScheduleSet::new`].
#[derive(Debug, Clone, Copy)]
pub struct ScheduleParams {
    /// Confidence decay exponent, in `(0, 0.5]`.
    pub gamma: f64,
    /// Confidence scale, at least 1.
    pub c0: f64,
    /// Power-control scale, positive.
    pub c1: f64,
    /// Bound with `psi(x*) <= r_prox^2` (an estimate in practice).
    pub r_prox: f64,
    /// Subgradient second-moment bound (an estimate in practice).
    pub omega2: f64,
    /// Quantizer resolution; 0 for infinite-rate links.
    pub delta: f64,
    /// Channel noise variance per coordinate.
    pub sigma2: f64,
    /// Problem dimension.
    pub dim: usize,
    /// Second-largest eigenvalue magnitude of the mixing matrix.
    pub lambda: f64,
}

/// The validated sequence family for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSet {
    gamma: f64,
    tau: f64,
    c0: f64,
    c1: f64,
    r_prox: f64,
    omega2: f64,
    xi: f64,
    lambda: f64,
}

impl ScheduleSet {
    pub fn new(p: ScheduleParams) -> Result<Self, ScheduleError> {
        if !(p.gamma > 0.0 && p.gamma <= 0.5) {
            return Err(ScheduleError::GammaOutOfRange(p.gamma));
        }
        if !p.c0.is_finite() || p.c0 < 1.0 {
            return Err(ScheduleError::InvalidC0(p.c0));
        }
        if !p.c1.is_finite() || p.c1 <= 0.0 {
            return Err(ScheduleError::InvalidC1(p.c1));
        }
        for (name, value) in [
            ("omega2", p.omega2),
            ("delta", p.delta),
            ("sigma2", p.sigma2),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ScheduleError::InvalidVarianceInput { name, value });
            }
        }
        if !p.r_prox.is_finite() || p.r_prox <= 0.0 {
            return Err(ScheduleError::InvalidRProx(p.r_prox));
        }
        if !(0.0..1.0).contains(&p.lambda) {
            return Err(ScheduleError::LambdaOutOfRange(p.lambda));
        }
        let d = p.dim as f64;
        let xi2 = p.omega2
            + p.c0 * p.c0 * p.delta * p.delta / 4.0 * d
            + p.c0 * p.c0 * p.sigma2 * d / (2.0 * p.gamma * p.c1);
        if xi2 == 0.0 {
            return Err(ScheduleError::DegenerateXi);
        }
        Ok(ScheduleSet {
            gamma: p.gamma,
            tau: 1.0 - 2.0 * p.gamma,
            c0: p.c0,
            c1: p.c1,
            r_prox: p.r_prox,
            omega2: p.omega2,
            xi: xi2.sqrt(),
            lambda: p.lambda,
        })
    }

    /// Power-control amplitude `alpha(k) = sqrt(c1) k^{tau/2}`, `k >= 1`.
    pub fn alpha(&self, k: u64) -> f64 {
        assert!(k >= 1, "schedules are defined for k >= 1");
        self.c1.sqrt() * (k as f64).powf(self.tau / 2.0)
    }

    /// Confidence weight `beta(k) = c0 k^{-gamma}`, `k >= 1`.
    pub fn beta(&self, k: u64) -> f64 {
        assert!(k >= 1, "schedules are defined for k >= 1");
        self.c0 * (k as f64).powf(-self.gamma)
    }

    /// Projection step size
    /// `eta(k) = r_prox sqrt(1 - lambda) / (4 xi k^{(1+gamma)/2})`, `k >= 1`.
    pub fn eta(&self, k: u64) -> f64 {
        assert!(k >= 1, "schedules are defined for k >= 1");
        self.r_prox * (1.0 - self.lambda).sqrt()
            / (4.0 * self.xi * (k as f64).powf((1.0 + self.gamma) / 2.0))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn r_prox(&self) -> f64 {
        self.r_prox
    }

    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    /// Effective stochastic-subgradient standard deviation `xi`.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The limit of the noise-condition ratio for this geometric family:
    /// `c0^2 / (2 gamma c1)`.
    pub fn noise_condition_limit(&self) -> f64 {
        self.c0 * self.c0 / (2.0 * self.gamma * self.c1)
    }

    /// Variance of one coordinate of the consensus-weighted accumulated
    /// channel noise under this family: `c0^2 sigma^2 / (2 gamma c1)`.
    pub fn accumulated_noise_variance(&self, sigma2: f64) -> f64 {
        self.c0 * self.c0 * sigma2 / (2.0 * self.gamma * self.c1)
    }
}

/// Evaluates the noise-boundedness diagnostic
/// `ratio(k) = beta(k)^2 * sum_{l<=k} alpha(l)^{-2}` for `k = 1..=horizon`.
///
/// Bounded ratios mean the accumulated channel noise keeps bounded variance;
/// for the geometric family with `tau + 2 gamma = 1` the ratio converges to
/// `c0^2 / (2 gamma c1)`, while e.g. constant sequences give `ratio(k) = k`.
pub fn noise_condition_ratios(
    alpha: impl Fn(u64) -> f64,
    beta: impl Fn(u64) -> f64,
    horizon: u64,
) -> Vec<f64> {
    let mut ratios = Vec::with_capacity(horizon as usize);
    let mut inv_sq_sum = 0.0;
    for k in 1..=horizon {
        let a = alpha(k);
        inv_sq_sum += 1.0 / (a * a);
        let b = beta(k);
        ratios.push(b * b * inv_sq_sum);
    }
    ratios
}

/// One checkpoint of the accumulated-noise simulation.
#[derive(Debug, Clone, Copy)]
pub struct NoiseAccumulationPoint {
    pub k: u64,
    /// Empirical variance of the raw discrepancy `sum_{l<=k} n(l)/alpha(l)`.
    pub var_raw: f64,
    /// Empirical variance of the confidence-scaled discrepancy
    /// `beta(k) * sum_{l<=k} n(l)/alpha(l)`.
    pub var_scaled: f64,
}

/// Monte Carlo simulation of the proxy/estimate discrepancy recursion
/// `D(k) = D(k-1) + n(k)/alpha(k)` with `n(k) ~ N(0, sigma2)`, reporting the
/// empirical variance across independent chains at each checkpoint.
pub fn simulate_noise_accumulation(
    alpha: impl Fn(u64) -> f64,
    beta: impl Fn(u64) -> f64,
    sigma2: f64,
    chains: usize,
    checkpoints: &[u64],
    seed: u64,
) -> Vec<NoiseAccumulationPoint> {
    assert!(!checkpoints.is_empty());
    let k_max = *checkpoints.iter().max().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("sigma finite");
    let mut discrepancy = vec![0.0f64; chains];
    let mut out = Vec::with_capacity(checkpoints.len());
    for k in 1..=k_max {
        let a = alpha(k);
        for d in discrepancy.iter_mut() {
            *d += normal.sample(&mut rng) / a;
        }
        if checkpoints.contains(&k) {
            let mean: f64 = discrepancy.iter().sum::<f64>() / chains as f64;
            let var: f64 = discrepancy
                .iter()
                .map(|d| (d - mean) * (d - mean))
                .sum::<f64>()
                / chains as f64;
            let b = beta(k);
            out.push(NoiseAccumulationPoint {
                k,
                var_raw: var,
                var_scaled: b * b * var,
            });
        }
    }
    out
}
