//! Experiment configuration: a flat TOML file with one key per tunable.
//!
//! Unspecified keys fall back to the defaults below, which reproduce the
//! headline convergence experiment (10 nodes, 30 dimensions, 10 points per
//! node, 6-bit links with range 100, channel variance 0.1).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::NoiseFamily;
use crate::topology::{Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Which built-in topologies an experiment covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySelector {
    Ring2,
    Complete,
    /// Run the experiment on both built-ins.
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // network
    pub topology: TopologySelector,
    pub n: usize,

    // problem
    pub d: usize,
    pub m: usize,
    pub mu: f64,
    pub polarized: bool,
    pub class_mean_scale: f64,
    /// Isotropic standard deviation of each Gaussian cluster.
    pub class_cov_scale: f64,
    /// 0 selects the exact (full-batch) oracle.
    pub batch_size: usize,
    pub data_seed: u64,

    // quantizer
    pub rate_bits: u32,
    #[serde(rename = "dynamic_range_U")]
    pub dynamic_range_u: f64,
    /// Bypass quantization entirely (no saturation, no dither).
    pub infinite_rate: bool,

    // channel
    pub sigma2: f64,
    pub noise_family: NoiseFamily,

    // schedules
    pub gamma: f64,
    /// Confidence exponents the convergence experiment sweeps.
    pub gammas: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    /// Proximal-radius estimate; defaults to `sqrt(psi(x*))` of the
    /// reference solution when absent.
    #[serde(rename = "R_prox")]
    pub r_prox: Option<f64>,
    /// Subgradient second-moment estimate; defaults to the pilot run's max
    /// squared subgradient norm when absent.
    #[serde(rename = "Omega2")]
    pub omega2: Option<f64>,

    // run shape
    pub horizon: u64,
    pub replications: usize,
    pub warm_restart: bool,
    /// Step-size multiplier for the pinned-sequence baseline arms of the
    /// convergence experiment. The baselines carry no schedule theory of
    /// their own; this was tuned once for reasonable convergence and is
    /// kept fixed across runs.
    pub baseline_eta_scale: f64,

    // saturation sweep
    pub u_grid: Vec<f64>,
    pub trials: u64,

    // noise-accumulation demo
    pub chains: usize,
    pub checkpoints: Vec<u64>,

    // reference solver
    pub reference_iters: u64,
    pub reference_tol: f64,
    pub pilot_iters: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            topology: TopologySelector::Both,
            n: 10,
            d: 30,
            m: 10,
            mu: 0.1,
            polarized: true,
            class_mean_scale: 1.5,
            class_cov_scale: 1.0,
            batch_size: 0,
            data_seed: 7,
            rate_bits: 6,
            dynamic_range_u: 100.0,
            infinite_rate: false,
            sigma2: 0.1,
            noise_family: NoiseFamily::Gaussian,
            gamma: 0.1,
            gammas: vec![0.1, 0.5],
            c0: 1.0,
            c1: 1.0,
            r_prox: None,
            omega2: None,
            horizon: 1000,
            replications: 5,
            warm_restart: false,
            baseline_eta_scale: 3.0,
            u_grid: vec![0.8, 1.0, 1.2, 1.4, 1.6, 1.8],
            trials: 100,
            chains: 50_000,
            checkpoints: vec![100, 400, 1600],
            reference_iters: 1_000_000,
            reference_tol: 1e-7,
            pilot_iters: 300,
        }
    }
}

impl Config {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.d == 0 || self.m == 0 {
            return bad("d and m must be positive".into());
        }
        if self.mu.is_nan() || self.mu <= 0.0 {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.gammas.is_empty() {
            return bad("gammas must not be empty".into());
        }
        for &g in self.gammas.iter().chain(std::iter::once(&self.gamma)) {
            if !(g > 0.0 && g <= 0.5) {
                return bad(format!("gamma must lie in (0, 0.5], got {g}"));
            }
        }
        Ok(())
    }

    /// The topologies this config selects, with their config-key names.
    pub fn topologies(&self) -> Result<Vec<(String, Topology)>, ConfigError> {
        let mut out = Vec::new();
        if matches!(
            self.topology,
            TopologySelector::Ring2 | TopologySelector::Both
        ) {
            out.push(("ring2".to_string(), Topology::ring(self.n)?));
        }
        if matches!(
            self.topology,
            TopologySelector::Complete | TopologySelector::Both
        ) {
            out.push(("complete".to_string(), Topology::fully_connected(self.n)?));
        }
        Ok(out)
    }

    /// Re-serializes the resolved configuration for the run manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
