//! Reference solutions, theorem-bound evaluation, Monte Carlo success
//! estimation, and CSV emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::derive_seed;
use crate::engine::{run, EngineConfig, EngineError, RunRecord};
use crate::problem::{LocalObjective, ProximalMap, SvmDataset};
use crate::schedules::ScheduleSet;
use crate::Vector;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

// ---------------------------------------------------------------------------
// Reference solution
// ---------------------------------------------------------------------------

/// A centralized solution of the global objective, used as the gap baseline.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub x_star: Vector,
    pub f_star: f64,
    /// Certified optimality gap: `f_star - max_t [f(x_t) - ||g_t||^2/(2 mu)]`
    /// (the strong-convexity lower bound along the trajectory).
    pub certificate: f64,
    pub iterations: u64,
}

/// Deterministic centralized subgradient descent with weighted (Polyak-style)
/// iterate averaging. Runs `max_iters` steps or stops early once the
/// strong-convexity certificate drops below `tol`.
pub fn solve_reference(dataset: &SvmDataset, max_iters: u64, tol: f64) -> ReferenceSolution {
    let mu = dataset.regularization();
    assert!(mu > 0.0, "the certificate needs a strongly convex objective");
    let d = dataset.dim();
    let check_every = 500u64;

    let mut x = Vector::zeros(d);
    let mut x_avg = Vector::zeros(d);
    let mut best_f = dataset.global_value(&x);
    let mut best_x = x.clone();
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = 0;

    for t in 1..=max_iters {
        iterations = t;
        let g = dataset.global_subgradient(&x);

        if t % check_every == 0 || t == 1 {
            let f_x = dataset.global_value(&x);
            lower = lower.max(f_x - g.norm_squared() / (2.0 * mu));
            let f_bar = dataset.global_value(&x_avg);
            if f_bar < best_f {
                best_f = f_bar;
                best_x = x_avg.clone();
            }
            if f_x < best_f {
                best_f = f_x;
                best_x = x.clone();
            }
            if best_f - lower < tol {
                break;
            }
        }

        let step = 2.0 / (mu * (t + 1) as f64);
        x -= g * step;
        // weighted average sum_t t x_t / sum_t t
        let w = 2.0 / (t + 2) as f64;
        x_avg = &x_avg * (1.0 - w) + &x * w;
    }

    let f_bar = dataset.global_value(&x_avg);
    if f_bar < best_f {
        best_f = f_bar;
        best_x = x_avg;
    }
    ReferenceSolution {
        x_star: best_x,
        f_star: best_f,
        certificate: best_f - lower,
        iterations,
    }
}

/// Empirical subgradient-norm estimates from a short deterministic
/// centralized trajectory, used to default the schedule parameters.
#[derive(Debug, Clone, Copy)]
pub struct PilotEstimates {
    /// Max observed per-node subgradient norm (the empirical Lipschitz
    /// constant, and the dynamic-range floor `U_min`).
    pub l_hat: f64,
    /// `l_hat^2`, the empirical second-moment bound.
    pub omega2_hat: f64,
}

pub fn pilot_estimates<L: LocalObjective>(
    dataset: &SvmDataset,
    locals: &[L],
    iters: u64,
) -> PilotEstimates {
    let mu = dataset.regularization();
    let mut x = Vector::zeros(dataset.dim());
    let mut l_hat = 0.0f64;
    for t in 1..=iters {
        for local in locals {
            l_hat = l_hat.max(local.subgradient(&x).norm());
        }
        let g = dataset.global_subgradient(&x);
        x -= g * (2.0 / (mu * (t + 1) as f64));
    }
    PilotEstimates {
        l_hat,
        omega2_hat: l_hat * l_hat,
    }
}

/// Default proximal-radius estimate `sqrt(psi(x*))`, floored away from zero
/// so the step-size sequence stays well defined.
pub fn default_r_prox(proximal: &ProximalMap, x_star: &Vector) -> f64 {
    proximal.psi(x_star).sqrt().max(1e-2)
}

// ---------------------------------------------------------------------------
// Theorem bounds
// ---------------------------------------------------------------------------

/// Upper bound on the expected suboptimality gap after `horizon` rounds:
/// `20 R ln(K sqrt(n)) / (K^{(1-gamma)/2} sqrt(1 - lambda)) * xi`.
pub fn theorem1_bound(s: &ScheduleSet, n: usize, horizon: u64) -> f64 {
    assert!(s.lambda() < 1.0, "spectral gap must be positive");
    let k = horizon as f64;
    20.0 * s.r_prox() * (k * (n as f64).sqrt()).ln() * s.xi()
        / (k.powf((1.0 - s.gamma()) / 2.0) * (1.0 - s.lambda()).sqrt())
}

/// Inputs for [`theorem2_bound`].
#[derive(Debug, Clone, Copy)]
pub struct SaturationBoundParams {
    pub c0: f64,
    pub c1: f64,
    pub gamma: f64,
    /// Quantizer resolution.
    pub delta: f64,
    pub sigma2: f64,
    pub omega2: f64,
    /// Quantizer dynamic range.
    pub u: f64,
    /// `U_min`: the Lipschitz constant of the objectives.
    pub u_min: f64,
    pub horizon: u64,
    pub dim: usize,
    pub edges: usize,
}

/// Lower bound on the probability that no quantizer saturates in `horizon`
/// rounds:
/// `(1 - (c0^2 Delta^2/2 + c0^2 sigma^2/(2 gamma c1) + Omega^2) / (U - U_min)^2)^{2 K d |E|}`,
/// clamped to zero whenever it is vacuous (`U <= U_min` or a negative base).
pub fn theorem2_bound(p: &SaturationBoundParams) -> f64 {
    if p.u <= p.u_min {
        return 0.0;
    }
    let psi2 = p.c0 * p.c0 * p.delta * p.delta / 2.0
        + p.c0 * p.c0 * p.sigma2 / (2.0 * p.gamma * p.c1)
        + p.omega2;
    let base = 1.0 - psi2 / ((p.u - p.u_min) * (p.u - p.u_min));
    if base <= 0.0 {
        return 0.0;
    }
    let exponent = 2.0 * p.horizon as f64 * p.dim as f64 * p.edges as f64;
    base.powf(exponent)
}

// ---------------------------------------------------------------------------
// Success probability
// ---------------------------------------------------------------------------

/// Monte Carlo estimate of the unsaturation probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessEstimate {
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// The theoretical lower bound evaluated for the same configuration.
    pub bound: f64,
}

impl SuccessEstimate {
    /// True when this estimate's interval overlaps `other`'s.
    pub fn interval_overlaps(&self, other: &SuccessEstimate) -> bool {
        self.wilson_low <= other.wilson_high && other.wilson_low <= self.wilson_high
    }
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0);
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // at the boundary outcomes the exact interval endpoint is p itself
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Runs `trials` independent replications (parallel, deterministically
/// seeded from `master_seed`) and counts the runs that reach the horizon
/// without saturation. Warm-restart configs are rejected by construction:
/// restarts would mask failures.
pub fn estimate_success_probability<L: LocalObjective>(
    template: &EngineConfig,
    locals: &[L],
    f_star: f64,
    trials: u64,
    master_seed: u64,
    bound: f64,
) -> Result<SuccessEstimate, HarnessError> {
    assert!(trials >= 1);
    assert!(
        !template.warm_restart,
        "success statistics are defined on the no-restart event"
    );
    let successes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut cfg = template.clone();
            cfg.seed = derive_seed(master_seed, t);
            match run(&cfg, locals, f_star) {
                Ok(record) => u64::from(record.status.is_success()),
                Err(_) => 0,
            }
        })
        .sum::<u64>();
    let p_hat = successes as f64 / trials as f64;
    let (wilson_low, wilson_high) = wilson_interval(successes, trials);
    Ok(SuccessEstimate {
        trials,
        successes,
        p_hat,
        wilson_low,
        wilson_high,
        bound,
    })
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "experiment_id,variant,topology,gamma,tau,c0,c1,sigma2,rate_bits,U,seed,k,gap_avg,gap_node_max,consensus_err_max,power_avg,status";

/// One per-iteration record row. Numbers render through Rust's shortest
/// round-trip `Display`, so parsing a written file reproduces the values
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub experiment_id: String,
    pub variant: String,
    pub topology: String,
    pub gamma: f64,
    pub tau: f64,
    pub c0: f64,
    pub c1: f64,
    pub sigma2: f64,
    /// 0 encodes infinite-rate (unquantized) links.
    pub rate_bits: u32,
    /// `inf` encodes infinite-rate links.
    pub u: f64,
    pub seed: u64,
    pub k: u64,
    pub gap_avg: f64,
    pub gap_node_max: f64,
    pub consensus_err_max: f64,
    pub power_avg: f64,
    pub status: String,
}

impl CsvRow {
    fn write_line(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment_id,
            self.variant,
            self.topology,
            self.gamma,
            self.tau,
            self.c0,
            self.c1,
            self.sigma2,
            self.rate_bits,
            self.u,
            self.seed,
            self.k,
            self.gap_avg,
            self.gap_node_max,
            self.consensus_err_max,
            self.power_avg,
            self.status
        )
    }
}

/// Renders rows to the documented schema in memory.
pub fn csv_bytes(rows: &[CsvRow]) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{CSV_HEADER}").expect("vec write");
    for row in rows {
        row.write_line(&mut out).expect("vec write");
    }
    out
}

/// Writes rows (header always included) to `path`.
pub fn emit_csv(rows: &[CsvRow], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, csv_bytes(rows)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Metadata shared by every row of one run.
#[derive(Debug, Clone)]
pub struct RowMeta {
    pub experiment_id: String,
    pub variant: String,
    pub topology: String,
    pub gamma: f64,
    pub tau: f64,
    pub c0: f64,
    pub c1: f64,
    pub sigma2: f64,
    pub rate_bits: u32,
    pub u: f64,
}

/// Flattens a run into per-iteration CSV rows.
pub fn rows_from_record(meta: &RowMeta, record: &RunRecord) -> Vec<CsvRow> {
    let status = record.status.csv_token().to_string();
    record
        .rows
        .iter()
        .map(|r| CsvRow {
            experiment_id: meta.experiment_id.clone(),
            variant: meta.variant.clone(),
            topology: meta.topology.clone(),
            gamma: meta.gamma,
            tau: meta.tau,
            c0: meta.c0,
            c1: meta.c1,
            sigma2: meta.sigma2,
            rate_bits: meta.rate_bits,
            u: meta.u,
            seed: record.seed,
            k: r.k,
            gap_avg: r.gap_avg,
            gap_node_max: r.gap_node_max,
            consensus_err_max: r.consensus_err_max,
            power_avg: r.power_avg,
            status: status.clone(),
        })
        .collect()
}

/// Ordinary least-squares slope of `ln(y)` against `ln(x)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    assert!(points.len() >= 2);
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
