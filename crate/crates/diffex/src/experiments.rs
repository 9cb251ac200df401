//! Experiment drivers: convergence curves, saturation sweeps, the
//! noise-accumulation demo, and bound evaluation.
//!
//! Each driver resolves a [`Config`] into engine runs, executes replications
//! in parallel with deterministically derived seeds, and exposes both the
//! structured results and flattened CSV rows.

use rayon::prelude::*;

use crate::channel::ChannelSpec;
use crate::config::{Config, ConfigError};
use crate::derive_seed;
use crate::engine::{run, EngineConfig, OracleMode, RunRecord, Variant};
use crate::harness::{
    default_r_prox, estimate_success_probability, pilot_estimates, rows_from_record,
    solve_reference, theorem1_bound, theorem2_bound, CsvRow, HarnessError, PilotEstimates,
    ReferenceSolution, RowMeta, SaturationBoundParams, SuccessEstimate,
};
use crate::problem::{ProximalMap, SvmDataParams, SvmDataset, SvmLocalObjective};
use crate::quantizer::{QuantizerSpec, QuantizerError};
use crate::schedules::{
    simulate_noise_accumulation, NoiseAccumulationPoint, ScheduleError, ScheduleParams,
    ScheduleSet,
};
use crate::topology::Topology;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
}

/// Everything derived once per config: data, reference solution, pilot
/// estimates, and the selected topologies.
pub struct Setup {
    pub config: Config,
    pub dataset: SvmDataset,
    pub locals: Vec<SvmLocalObjective>,
    pub reference: ReferenceSolution,
    pub pilot: PilotEstimates,
    /// Resolved proximal-radius estimate (config override or reference).
    pub r_prox: f64,
    /// Resolved second-moment estimate (config override or pilot).
    pub omega2: f64,
    pub proximal: ProximalMap,
    pub topologies: Vec<(String, Topology)>,
}

impl Setup {
    pub fn prepare(config: Config) -> Result<Self, ExperimentError> {
        config.validate()?;
        let dataset = SvmDataset::generate(&SvmDataParams {
            nodes: config.n,
            points_per_node: config.m,
            dim: config.d,
            class_mean_scale: config.class_mean_scale,
            class_cov_scale: config.class_cov_scale,
            polarized: config.polarized,
            regularization: config.mu,
            seed: config.data_seed,
        })?;
        let locals = dataset.local_objectives();
        let reference = solve_reference(&dataset, config.reference_iters, config.reference_tol);
        let pilot = pilot_estimates(&dataset, &locals, config.pilot_iters);
        let proximal = ProximalMap::Quadratic;
        let r_prox = config
            .r_prox
            .unwrap_or_else(|| default_r_prox(&proximal, &reference.x_star));
        let omega2 = config.omega2.unwrap_or(pilot.omega2_hat);
        let topologies = config.topologies()?;
        Ok(Setup {
            config,
            dataset,
            locals,
            reference,
            pilot,
            r_prox,
            omega2,
            proximal,
            topologies,
        })
    }

    fn quantizer(&self, u: f64) -> Result<Option<QuantizerSpec>, ExperimentError> {
        if self.config.infinite_rate {
            Ok(None)
        } else {
            Ok(Some(QuantizerSpec::new(self.config.rate_bits, u)?))
        }
    }

    fn oracle(&self) -> OracleMode {
        if self.config.batch_size == 0 {
            OracleMode::Exact
        } else {
            OracleMode::Minibatch(self.config.batch_size)
        }
    }

    /// Schedule family for one arm on one topology. `delta` is zero for
    /// infinite-rate links.
    pub fn schedules(
        &self,
        gamma: f64,
        lambda: f64,
        u: f64,
        sigma2: f64,
    ) -> Result<ScheduleSet, ExperimentError> {
        self.schedules_scaled(gamma, lambda, u, sigma2, 1.0)
    }

    fn schedules_scaled(
        &self,
        gamma: f64,
        lambda: f64,
        u: f64,
        sigma2: f64,
        r_prox_scale: f64,
    ) -> Result<ScheduleSet, ExperimentError> {
        let delta = match self.quantizer(u)? {
            Some(q) => q.resolution(),
            None => 0.0,
        };
        Ok(ScheduleSet::new(ScheduleParams {
            gamma,
            c0: self.config.c0,
            c1: self.config.c1,
            r_prox: self.r_prox * r_prox_scale,
            omega2: self.omega2,
            delta,
            sigma2,
            dim: self.config.d,
            lambda,
        })?)
    }
}

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

/// One algorithm variant on one topology, over all replications.
pub struct ArmResult {
    pub meta: RowMeta,
    pub schedules: ScheduleSet,
    pub lambda: f64,
    pub records: Vec<RunRecord>,
}

impl ArmResult {
    /// Replication-averaged node-averaged gap at each iteration.
    pub fn mean_gap_curve(&self) -> Vec<f64> {
        let k_max = self
            .records
            .iter()
            .map(|r| r.rows.len())
            .min()
            .unwrap_or(0);
        (0..k_max)
            .map(|i| {
                self.records.iter().map(|r| r.rows[i].gap_avg).sum::<f64>()
                    / self.records.len() as f64
            })
            .collect()
    }

    /// Final value of the replication-averaged gap curve.
    pub fn final_mean_gap(&self) -> f64 {
        *self.mean_gap_curve().last().expect("non-empty runs")
    }

    /// Minimum of the replication-averaged gap curve.
    pub fn min_mean_gap(&self) -> f64 {
        self.mean_gap_curve()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

pub struct ConvergenceResult {
    pub arms: Vec<ArmResult>,
}

impl ConvergenceResult {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for arm in &self.arms {
            for record in &arm.records {
                rows.extend(rows_from_record(&arm.meta, record));
            }
        }
        rows
    }

    pub fn arm(&self, topology: &str, variant: &str, gamma: f64) -> Option<&ArmResult> {
        self.arms.iter().find(|a| {
            a.meta.topology == topology
                && a.meta.variant == variant
                && (a.meta.gamma - gamma).abs() < 1e-12
        })
    }
}

struct ArmSpec {
    variant: Variant,
    /// Confidence exponent of the schedule family supplying `eta`.
    gamma_eta: f64,
    /// Gamma recorded in the CSV: 0 for the pinned-sequence baselines.
    gamma_label: f64,
    sigma2: f64,
    /// Multiplier on the step-size scale (baseline tuning knob).
    eta_scale: f64,
}

/// Runs the four-curve convergence experiment on every selected topology:
/// a quantized noiseless baseline, the noisy baseline without confidence or
/// power control (which accumulates noise and diverges), and differential
/// exchange at each configured confidence exponent.
///
/// All arms share the replication seeds. The two baselines have no schedule
/// theory of their own; they share one step-size sequence (the
/// `config.gamma` family scaled by `baseline_eta_scale`), so the pair
/// differs only in channel noise.
pub fn convergence(setup: &Setup, master_seed: u64) -> Result<ConvergenceResult, ExperimentError> {
    let cfg = &setup.config;
    let baseline_scale = cfg.baseline_eta_scale;
    let mut arm_specs = vec![
        ArmSpec {
            variant: Variant::NoiselessBaseline,
            gamma_eta: cfg.gamma,
            gamma_label: 0.0,
            sigma2: 0.0,
            eta_scale: baseline_scale,
        },
        ArmSpec {
            variant: Variant::NaiveDlmd,
            gamma_eta: cfg.gamma,
            gamma_label: 0.0,
            sigma2: cfg.sigma2,
            eta_scale: baseline_scale,
        },
    ];
    for &gamma in &cfg.gammas {
        arm_specs.push(ArmSpec {
            variant: Variant::Diffex,
            gamma_eta: gamma,
            gamma_label: gamma,
            sigma2: cfg.sigma2,
            eta_scale: 1.0,
        });
    }

    let seeds: Vec<u64> = (0..cfg.replications)
        .map(|r| derive_seed(master_seed, r as u64))
        .collect();

    let mut arms = Vec::new();
    for (topo_name, topology) in &setup.topologies {
        let lambda = topology.spectral_info().lambda;
        for spec in &arm_specs {
            let schedules = setup.schedules_scaled(
                spec.gamma_eta,
                lambda,
                cfg.dynamic_range_u,
                cfg.sigma2,
                spec.eta_scale,
            )?;
            let engine = EngineConfig {
                topology: topology.clone(),
                schedules,
                variant: spec.variant,
                quantizer: setup.quantizer(cfg.dynamic_range_u)?,
                channel: ChannelSpec::new(spec.sigma2, cfg.noise_family)?,
                proximal: setup.proximal.clone(),
                oracle: setup.oracle(),
                horizon: cfg.horizon,
                seed: 0,
                warm_restart: cfg.warm_restart,
            };
            let records: Vec<RunRecord> = seeds
                .par_iter()
                .map(|&seed| {
                    let mut c = engine.clone();
                    c.seed = seed;
                    run(&c, &setup.locals, setup.reference.f_star)
                })
                .collect::<Result<_, _>>()?;
            let (tau, c0, c1) = if spec.variant == Variant::Diffex {
                (schedules.tau(), schedules.c0(), schedules.c1())
            } else {
                // pinned all-one sequences correspond to gamma = tau = 0
                (0.0, 1.0, 1.0)
            };
            arms.push(ArmResult {
                meta: RowMeta {
                    experiment_id: "convergence".to_string(),
                    variant: spec.variant.name().to_string(),
                    topology: topo_name.clone(),
                    gamma: spec.gamma_label,
                    tau,
                    c0,
                    c1,
                    sigma2: spec.sigma2,
                    rate_bits: if cfg.infinite_rate { 0 } else { cfg.rate_bits },
                    u: if cfg.infinite_rate {
                        f64::INFINITY
                    } else {
                        cfg.dynamic_range_u
                    },
                },
                schedules,
                lambda,
                records,
            });
        }
    }
    Ok(ConvergenceResult { arms })
}

// ---------------------------------------------------------------------------
// Saturation sweep
// ---------------------------------------------------------------------------

pub struct SweepPoint {
    pub topology: String,
    pub u: f64,
    pub estimate: SuccessEstimate,
}

pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn points_for(&self, topology: &str) -> Vec<&SweepPoint> {
        self.points
            .iter()
            .filter(|p| p.topology == topology)
            .collect()
    }

    /// Summary CSV (one row per grid point).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "experiment_id,topology,U,trials,successes,p_hat,wilson_low,wilson_high,bound\n",
        );
        for p in &self.points {
            let e = &p.estimate;
            out.push_str(&format!(
                "saturation-sweep,{},{},{},{},{},{},{},{}\n",
                p.topology,
                p.u,
                e.trials,
                e.successes,
                e.p_hat,
                e.wilson_low,
                e.wilson_high,
                e.bound
            ));
        }
        out
    }
}

/// Estimates the success probability across the dynamic-range grid for
/// every selected topology. Trial seeds are shared across topologies and
/// grid points are seeded independently of each other.
pub fn saturation_sweep(setup: &Setup, master_seed: u64) -> Result<SweepResult, ExperimentError> {
    let cfg = &setup.config;
    let mut points = Vec::new();
    for (topo_name, topology) in &setup.topologies {
        let lambda = topology.spectral_info().lambda;
        for (u_idx, &u) in cfg.u_grid.iter().enumerate() {
            let quantizer = setup.quantizer(u)?.ok_or_else(|| {
                ConfigError::Invalid("the saturation sweep needs finite-rate links".into())
            })?;
            let schedules = setup.schedules(cfg.gamma, lambda, u, cfg.sigma2)?;
            let engine = EngineConfig {
                topology: topology.clone(),
                schedules,
                variant: Variant::Diffex,
                quantizer: Some(quantizer),
                channel: ChannelSpec::new(cfg.sigma2, cfg.noise_family)?,
                proximal: setup.proximal.clone(),
                oracle: setup.oracle(),
                horizon: cfg.horizon,
                seed: 0,
                warm_restart: false,
            };
            let bound = theorem2_bound(&SaturationBoundParams {
                c0: cfg.c0,
                c1: cfg.c1,
                gamma: cfg.gamma,
                delta: quantizer.resolution(),
                sigma2: cfg.sigma2,
                omega2: setup.omega2,
                u,
                u_min: setup.pilot.l_hat,
                horizon: cfg.horizon,
                dim: cfg.d,
                edges: topology.edge_count(),
            });
            let estimate = estimate_success_probability(
                &engine,
                &setup.locals,
                setup.reference.f_star,
                cfg.trials,
                derive_seed(master_seed, u_idx as u64),
                bound,
            )?;
            points.push(SweepPoint {
                topology: topo_name.clone(),
                u,
                estimate,
            });
        }
    }
    Ok(SweepResult { points })
}

// ---------------------------------------------------------------------------
// Noise-accumulation demo
// ---------------------------------------------------------------------------

pub struct NoiseAccumulationResult {
    /// Constant sequences: the discrepancy variance grows linearly.
    pub constant: Vec<NoiseAccumulationPoint>,
    /// Scheduled sequences: the confidence-scaled variance stays bounded.
    pub scheduled: Vec<NoiseAccumulationPoint>,
    /// Theoretical cap `c0^2 sigma^2 / (2 gamma c1)` for the scheduled run.
    pub cap: f64,
}

impl NoiseAccumulationResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("experiment_id,sequences,k,var_raw,var_beta_scaled\n");
        for (label, pts) in [("constant", &self.constant), ("scheduled", &self.scheduled)] {
            for p in pts {
                out.push_str(&format!(
                    "noise-accumulation,{},{},{},{}\n",
                    label, p.k, p.var_raw, p.var_scaled
                ));
            }
        }
        out
    }
}

pub fn noise_accumulation(
    setup: &Setup,
    master_seed: u64,
) -> Result<NoiseAccumulationResult, ExperimentError> {
    let cfg = &setup.config;
    // the recursion is topology-free; lambda only matters to eta, which the
    // discrepancy never sees
    let schedules = setup.schedules(cfg.gamma, 0.0, cfg.dynamic_range_u, cfg.sigma2)?;
    let constant = simulate_noise_accumulation(
        |_| 1.0,
        |_| 1.0,
        cfg.sigma2,
        cfg.chains,
        &cfg.checkpoints,
        derive_seed(master_seed, 0),
    );
    let scheduled = simulate_noise_accumulation(
        |k| schedules.alpha(k),
        |k| schedules.beta(k),
        cfg.sigma2,
        cfg.chains,
        &cfg.checkpoints,
        derive_seed(master_seed, 1),
    );
    Ok(NoiseAccumulationResult {
        constant,
        scheduled,
        cap: schedules.accumulated_noise_variance(cfg.sigma2),
    })
}

// ---------------------------------------------------------------------------
// Bound evaluation
// ---------------------------------------------------------------------------

pub struct BoundsReport {
    pub lines: Vec<String>,
    pub csv: String,
}

/// Evaluates both theorem bounds for the configured parameters.
pub fn bounds(setup: &Setup) -> Result<BoundsReport, ExperimentError> {
    let cfg = &setup.config;
    let mut lines = Vec::new();
    let mut csv = String::from("experiment_id,topology,kind,gamma,U,K,value\n");
    lines.push(format!(
        "pilot: L_hat = {:.6}, Omega2_hat = {:.6}; reference: f* = {:.9} (certificate {:.3e}); r_prox = {:.6}",
        setup.pilot.l_hat,
        setup.pilot.omega2_hat,
        setup.reference.f_star,
        setup.reference.certificate,
        setup.r_prox,
    ));
    for (topo_name, topology) in &setup.topologies {
        let lambda = topology.spectral_info().lambda;
        lines.push(format!("{topo_name}: lambda = {lambda:.6}"));
        for &gamma in &cfg.gammas {
            let schedules = setup.schedules(gamma, lambda, cfg.dynamic_range_u, cfg.sigma2)?;
            let b = theorem1_bound(&schedules, cfg.n, cfg.horizon);
            lines.push(format!(
                "  suboptimality bound (gamma={gamma}, K={}): {b:.6}",
                cfg.horizon
            ));
            csv.push_str(&format!(
                "bounds,{topo_name},suboptimality,{gamma},{},{},{b}\n",
                cfg.dynamic_range_u, cfg.horizon
            ));
        }
        for &u in &cfg.u_grid {
            let delta = match setup.quantizer(u)? {
                Some(q) => q.resolution(),
                None => 0.0,
            };
            let b = theorem2_bound(&SaturationBoundParams {
                c0: cfg.c0,
                c1: cfg.c1,
                gamma: cfg.gamma,
                delta,
                sigma2: cfg.sigma2,
                omega2: setup.omega2,
                u,
                u_min: setup.pilot.l_hat,
                horizon: cfg.horizon,
                dim: cfg.d,
                edges: topology.edge_count(),
            });
            lines.push(format!("  success bound (U={u}, K={}): {b:.6}", cfg.horizon));
            csv.push_str(&format!(
                "bounds,{topo_name},success,{},{u},{},{b}\n",
                cfg.gamma, cfg.horizon
            ));
        }
    }
    Ok(BoundsReport { lines, csv })
}

// ---------------------------------------------------------------------------
// Per-run summaries (averaged-iterate gaps, power, restarts)
// ---------------------------------------------------------------------------

pub const SUMMARY_HEADER: &str = "experiment_id,variant,topology,gamma,seed,status,k_reached,final_gap_avg,final_gap_avg_iterate_max,final_power_max,omega_hat,l_hat,max_differential_inf,restarts";

/// One line per run with the end-of-run scalars that the per-iteration
/// schema does not carry (notably the averaged-iterate gap).
pub fn summary_csv(result: &ConvergenceResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for arm in &result.arms {
        for r in &arm.records {
            let final_gap_avg = r.rows.last().map(|row| row.gap_avg).unwrap_or(f64::NAN);
            let gap_it = r
                .final_gap_avg_iterate
                .iter()
                .cloned()
                .fold(f64::MIN, f64::max);
            let power = r.final_avg_power.iter().cloned().fold(0.0, f64::max);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                arm.meta.experiment_id,
                arm.meta.variant,
                arm.meta.topology,
                arm.meta.gamma,
                r.seed,
                r.status.csv_token(),
                r.k_reached,
                final_gap_avg,
                gap_it,
                power,
                r.max_oracle_norm,
                r.max_subgradient_norm,
                r.max_differential_inf,
                r.restarts
            ));
        }
    }
    out
}
