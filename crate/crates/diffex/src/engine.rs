//! The synchronous per-node state machine and its baselines.
//!
//! Every node keeps a dual iterate `z`, a primal iterate `x`, and two kinds
//! of link-local replicas: for each neighbor it maintains a *proxy* of its
//! own state (what the neighbor believes about it, updated by the quantized
//! differentials it has sent) and a *noisy estimate* of the neighbor's state
//! (updated by the decoded differentials it has received). One round:
//!
//! 1. every sender computes its state differential against the proxy,
//!    aborts with FAILURE if it exceeds the quantizer range in sup-norm,
//!    otherwise quantizes it, advances the proxy, and transmits the
//!    differential scaled by `alpha(k)`;
//! 2. every receiver decodes by dividing out `alpha(k)` and advances its
//!    estimate;
//! 3. every node takes a consensus-plus-subgradient dual step
//!    `z_i <- W_ii z_i + sum_j W_ij ytilde_ij + g_i` with
//!    `W(k) = (1 - beta(k)) I + beta(k) P`, then projects to the primal.
//!
//! The `naive_dlmd` and `noiseless_baseline` variants run the same machine
//! with the confidence and power-control sequences pinned to one, which is
//! exactly the classical algorithm that accumulates channel noise without
//! bound.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::channel::{ChannelSpec, PowerLedger};
use crate::derive_seed;
use crate::problem::{LocalObjective, ProximalMap};
use crate::quantizer::QuantizerSpec;
use crate::schedules::ScheduleSet;
use crate::topology::Topology;
use crate::Vector;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("topology has {nodes} nodes but {locals} local objectives were supplied")]
    NodeCountMismatch { nodes: usize, locals: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("local objectives disagree on dimension ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
    #[error("noiseless_baseline requires sigma2 = 0, got {0}")]
    NoiselessVariantWithNoise(f64),
}

/// Which update rule the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Differential exchange with confidence and power control.
    Diffex,
    /// Confidence and power-control sequences pinned to one.
    NaiveDlmd,
    /// `NaiveDlmd` restricted to a zero-variance channel.
    NoiselessBaseline,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Diffex => "diffex",
            Variant::NaiveDlmd => "naive_dlmd",
            Variant::NoiselessBaseline => "noiseless_baseline",
        }
    }
}

/// How nodes obtain subgradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    Exact,
    /// Uniform mini-batch of this size, drawn with replacement.
    Minibatch(usize),
}

/// Everything one run needs besides the objectives.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub topology: Topology,
    pub schedules: ScheduleSet,
    pub variant: Variant,
    /// `None` bypasses quantization entirely (infinite-rate links).
    pub quantizer: Option<QuantizerSpec>,
    pub channel: ChannelSpec,
    pub proximal: ProximalMap,
    pub oracle: OracleMode,
    /// Iteration horizon `K`.
    pub horizon: u64,
    /// Master seed; all per-link and per-node streams are derived from it.
    pub seed: u64,
    /// On saturation, average states across nodes and restart the schedule
    /// clock instead of failing. Runs in this mode are excluded from
    /// success-probability statistics.
    pub warm_restart: bool,
}

const QUANT_STREAM: u64 = 0x1000_0000_0000_0000;
const NOISE_STREAM: u64 = 0x2000_0000_0000_0000;
const ORACLE_STREAM: u64 = 0x3000_0000_0000_0000;

/// Streams are keyed by the link's endpoints, not its position in the edge
/// list, so draws are reproducible independent of iteration order and
/// topologies sharing a link (ring edges are a subset of the complete
/// graph's) share its randomness under a common seed.
fn link_salt(sender: usize, receiver: usize) -> u64 {
    ((sender as u64) << 16) | receiver as u64
}

impl EngineConfig {
    /// Random stream feeding the quantizer of directed link
    /// `sender -> receiver`.
    pub fn quantizer_stream(&self, sender: usize, receiver: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(
            self.seed,
            QUANT_STREAM + link_salt(sender, receiver),
        ))
    }

    /// Random stream feeding the channel noise of directed link
    /// `sender -> receiver`.
    pub fn noise_stream(&self, sender: usize, receiver: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(
            self.seed,
            NOISE_STREAM + link_salt(sender, receiver),
        ))
    }

    /// Random stream feeding node `i`'s stochastic oracle.
    pub fn oracle_stream(&self, node: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, ORACLE_STREAM + node as u64))
    }

    fn alpha_at(&self, k: u64) -> f64 {
        match self.variant {
            Variant::Diffex => self.schedules.alpha(k),
            _ => 1.0,
        }
    }

    fn beta_at(&self, k: u64) -> f64 {
        match self.variant {
            // consensus weights need beta <= 1; c0 > 1 would exceed it for
            // the first few rounds
            Variant::Diffex => self.schedules.beta(k).min(1.0),
            _ => 1.0,
        }
    }
}

/// Result of one synchronous round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Ok {
        iteration: u64,
    },
    /// Some link's state differential exceeded the quantizer range.
    Failure {
        iteration: u64,
        sender: usize,
        receiver: usize,
    },
}

/// Terminal state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Saturated {
        iteration: u64,
        sender: usize,
        receiver: usize,
    },
}

impl RunStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn csv_token(&self) -> &'static str {
        match self {
            RunStatus::Completed => "ok",
            RunStatus::Saturated { .. } => "failure",
        }
    }
}

/// Per-iteration metrics. Row `k` reflects the state *before* step `k`
/// executes (so `k = 1` is the all-zero initialization), together with the
/// schedule values step `k` is about to use and the average power of the
/// `k - 1` completed rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub k: u64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    /// Node-averaged instantaneous gap `(1/n) sum_i f(x_i(k)) - f*`.
    pub gap_avg: f64,
    /// Per-node instantaneous gap `f(x_i(k)) - f*`.
    pub gap_node: Vec<f64>,
    pub gap_node_max: f64,
    /// `max_i f(xhat_i(k)) - f*` where `xhat` is the running average.
    pub gap_avg_iterate_max: f64,
    /// `max_i ||zbar(k) - z_i(k)||_2`.
    pub consensus_err_max: f64,
    /// Largest per-node average transmit power so far.
    pub power_avg: f64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub status: RunStatus,
    /// Completed rounds (equals `horizon` on success).
    pub k_reached: u64,
    pub rows: Vec<IterationRow>,
    /// `f(xhat_i) - f*` per node at the last recorded iterate.
    pub final_gap_avg_iterate: Vec<f64>,
    /// Per-node average transmit power over completed rounds.
    pub final_avg_power: Vec<f64>,
    /// Max over nodes of observed `||g~_i(k)||_2` (the empirical Omega;
    /// includes mini-batch noise when the oracle is stochastic).
    pub max_oracle_norm: f64,
    /// Max over nodes of `||g_i(x_i(k))||_2` for exact subgradients at the
    /// visited iterates (the empirical Lipschitz constant).
    pub max_subgradient_norm: f64,
    /// Max over links/rounds of `||z_j - y_ij||_inf` before quantization.
    pub max_differential_inf: f64,
    /// Warm restarts taken (0 unless `warm_restart` is set).
    pub restarts: u32,
}

struct LinkState {
    sender: usize,
    receiver: usize,
    /// Proxy `y`: maintained by the sender, tracks what the receiver
    /// believes about the sender's state.
    proxy: Vector,
    /// Estimate `y~`: maintained by the receiver, the noisy replica of the
    /// sender's state.
    estimate: Vector,
    quant_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

/// A run in progress, exposed stepwise so tests and diagnostics can inspect
/// proxies, estimates, and iterates between rounds.
pub struct Simulation<'a, L: LocalObjective> {
    cfg: &'a EngineConfig,
    locals: &'a [L],
    dim: usize,
    /// Next round index (1-based).
    k: u64,
    /// Schedule clock; equals `k` unless warm restarts rewound it.
    schedule_k: u64,
    z: Vec<Vector>,
    x: Vec<Vector>,
    x_sum: Vec<Vector>,
    links: Vec<LinkState>,
    /// Per receiver: `(sender, link index, P[receiver, sender])`.
    incoming: Vec<Vec<(usize, usize, f64)>>,
    oracle_rngs: Vec<ChaCha8Rng>,
    ledger: PowerLedger,
    max_oracle_norm: f64,
    max_subgradient_norm: f64,
    max_differential_inf: f64,
    restarts: u32,
}

impl<'a, L: LocalObjective> Simulation<'a, L> {
    pub fn new(cfg: &'a EngineConfig, locals: &'a [L]) -> Result<Self, EngineError> {
        let n = cfg.topology.node_count();
        if locals.len() != n {
            return Err(EngineError::NodeCountMismatch {
                nodes: n,
                locals: locals.len(),
            });
        }
        if cfg.horizon == 0 {
            return Err(EngineError::ZeroHorizon);
        }
        let dim = locals[0].dim();
        for l in locals {
            if l.dim() != dim {
                return Err(EngineError::DimensionMismatch {
                    a: dim,
                    b: l.dim(),
                });
            }
        }
        if cfg.variant == Variant::NoiselessBaseline && cfg.channel.sigma2() != 0.0 {
            return Err(EngineError::NoiselessVariantWithNoise(cfg.channel.sigma2()));
        }

        let directed = cfg.topology.directed_links();
        let links: Vec<LinkState> = directed
            .iter()
            .map(|&(sender, receiver)| LinkState {
                sender,
                receiver,
                proxy: Vector::zeros(dim),
                estimate: Vector::zeros(dim),
                quant_rng: cfg.quantizer_stream(sender, receiver),
                noise_rng: cfg.noise_stream(sender, receiver),
            })
            .collect();
        let mut incoming: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
        for (idx, link) in links.iter().enumerate() {
            let weight = cfg.topology.matrix()[(link.receiver, link.sender)];
            incoming[link.receiver].push((link.sender, idx, weight));
        }

        // x(1) is the projection of the zero dual state: identical to the
        // all-zero initialization for the quadratic proximal map, and
        // feasible for constrained ones
        let eta1 = cfg.schedules.eta(1);
        let x0 = cfg.proximal.project(&Vector::zeros(dim), eta1);
        Ok(Simulation {
            cfg,
            locals,
            dim,
            k: 1,
            schedule_k: 1,
            z: vec![Vector::zeros(dim); n],
            x: vec![x0; n],
            x_sum: vec![Vector::zeros(dim); n],
            links,
            incoming,
            oracle_rngs: (0..n).map(|i| cfg.oracle_stream(i)).collect(),
            ledger: PowerLedger::new(n),
            max_oracle_norm: 0.0,
            max_subgradient_norm: 0.0,
            max_differential_inf: 0.0,
            restarts: 0,
        })
    }

    pub fn node_count(&self) -> usize {
        self.z.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Next round index.
    pub fn next_k(&self) -> u64 {
        self.k
    }

    pub fn dual_state(&self, node: usize) -> &Vector {
        &self.z[node]
    }

    pub fn primal_state(&self, node: usize) -> &Vector {
        &self.x[node]
    }

    /// Running average of primal iterates seen so far (indices `1..=k-1`
    /// after `k - 1` completed steps).
    pub fn primal_average(&self, node: usize) -> Vector {
        let count = (self.k - 1).max(1) as f64;
        &self.x_sum[node] / count
    }

    /// The sender-side proxy `y` for directed link `sender -> receiver`.
    pub fn proxy(&self, sender: usize, receiver: usize) -> Option<&Vector> {
        self.links
            .iter()
            .find(|l| l.sender == sender && l.receiver == receiver)
            .map(|l| &l.proxy)
    }

    /// The receiver-side estimate `y~` for directed link `sender -> receiver`.
    pub fn estimate(&self, sender: usize, receiver: usize) -> Option<&Vector> {
        self.links
            .iter()
            .find(|l| l.sender == sender && l.receiver == receiver)
            .map(|l| &l.estimate)
    }

    pub fn ledger(&self) -> &PowerLedger {
        &self.ledger
    }

    pub fn max_oracle_norm(&self) -> f64 {
        self.max_oracle_norm
    }

    pub fn max_subgradient_norm(&self) -> f64 {
        self.max_subgradient_norm
    }

    pub fn max_differential_inf(&self) -> f64 {
        self.max_differential_inf
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    /// Accumulates `x(k)` into the running primal averages. `run` calls this
    /// at the top of every round so that after round `k` the average covers
    /// iterates `1..=k`.
    fn accumulate_average(&mut self) {
        for (sum, x) in self.x_sum.iter_mut().zip(self.x.iter()) {
            *sum += x;
        }
    }

    /// Executes round `k`: differential exchange over every directed link,
    /// then consensus/subgradient/projection at every node. A `Failure`
    /// outcome is terminal.
    pub fn step(&mut self) -> StepOutcome {
        self.accumulate_average();
        self.step_inner()
    }

    fn step_inner(&mut self) -> StepOutcome {
        let k = self.k;
        let sk = self.schedule_k;
        let alpha = self.cfg.alpha_at(sk);
        let beta = self.cfg.beta_at(sk);
        let eta = self.cfg.schedules.eta(sk);
        let quantizer = self.cfg.quantizer;

        // differential exchange on every directed link
        for idx in 0..self.links.len() {
            let sender = self.links[idx].sender;
            let omega = &self.z[sender] - &self.links[idx].proxy;
            let omega_inf = omega.amax();
            self.max_differential_inf = self.max_differential_inf.max(omega_inf);

            let delta = match &quantizer {
                Some(spec) => {
                    if omega_inf > spec.dynamic_range() {
                        let receiver = self.links[idx].receiver;
                        if self.cfg.warm_restart {
                            self.warm_restart(eta);
                            self.k += 1;
                            return StepOutcome::Ok { iteration: k };
                        }
                        return StepOutcome::Failure {
                            iteration: k,
                            sender,
                            receiver,
                        };
                    }
                    spec.quantize(&omega, &mut self.links[idx].quant_rng).value
                }
                None => omega,
            };

            let link = &mut self.links[idx];
            link.proxy += &delta;
            let signal = &delta * alpha;
            self.ledger.record(sender, &signal);
            let received = self.cfg.channel.transmit(&signal, &mut link.noise_rng);
            link.estimate += received / alpha;
        }

        // consensus + subgradient + projection, synchronously from z(k)
        let n = self.z.len();
        let p = self.cfg.topology.matrix();
        let mut z_next = Vec::with_capacity(n);
        for i in 0..n {
            let g = match self.cfg.oracle {
                OracleMode::Exact => {
                    let g = self.locals[i].subgradient(&self.x[i]);
                    self.max_subgradient_norm = self.max_subgradient_norm.max(g.norm());
                    g
                }
                OracleMode::Minibatch(b) => {
                    // log the exact-subgradient norm separately from the
                    // noisy oracle output
                    self.max_subgradient_norm = self
                        .max_subgradient_norm
                        .max(self.locals[i].subgradient(&self.x[i]).norm());
                    self.locals[i].minibatch_subgradient(&self.x[i], b, &mut self.oracle_rngs[i])
                }
            };
            self.max_oracle_norm = self.max_oracle_norm.max(g.norm());

            let w_ii = 1.0 - beta + beta * p[(i, i)];
            let mut z_new = &self.z[i] * w_ii;
            for &(_, link_idx, weight) in &self.incoming[i] {
                z_new += &self.links[link_idx].estimate * (beta * weight);
            }
            z_new += g;
            z_next.push(z_new);
        }
        for (x, z) in self.x.iter_mut().zip(z_next.iter()) {
            *x = self.cfg.proximal.project(z, eta);
        }
        self.z = z_next;

        self.ledger.advance_iteration();
        self.k += 1;
        self.schedule_k += 1;
        StepOutcome::Ok { iteration: k }
    }

    /// Saturation recovery: one idealized model exchange (every node adopts
    /// the network-average dual state), fresh link replicas, and a rewound
    /// schedule clock.
    fn warm_restart(&mut self, eta: f64) {
        self.restarts += 1;
        let n = self.z.len() as f64;
        let mut mean = Vector::zeros(self.dim);
        for z in &self.z {
            mean += z;
        }
        mean /= n;
        for z in self.z.iter_mut() {
            *z = mean.clone();
        }
        let x = self.cfg.proximal.project(&mean, eta);
        for xi in self.x.iter_mut() {
            *xi = x.clone();
        }
        for link in self.links.iter_mut() {
            link.proxy = Vector::zeros(self.dim);
            link.estimate = Vector::zeros(self.dim);
        }
        self.schedule_k = 1;
        self.ledger.advance_iteration();
    }

    fn metrics_row(&self, k: u64, f_star: f64) -> IterationRow {
        let n = self.z.len();
        let count = k as f64; // x_sum holds iterates 1..=k when called
        let global = |x: &Vector| {
            self.locals.iter().map(|l| l.value(x)).sum::<f64>() / self.locals.len() as f64
        };

        let gap_node: Vec<f64> = self.x.iter().map(|x| global(x) - f_star).collect();
        let gap_avg = gap_node.iter().sum::<f64>() / n as f64;
        let gap_node_max = gap_node.iter().cloned().fold(f64::MIN, f64::max);
        let gap_avg_iterate_max = self
            .x_sum
            .iter()
            .map(|s| global(&(s / count)) - f_star)
            .fold(f64::MIN, f64::max);

        let mut zbar = Vector::zeros(self.dim);
        for z in &self.z {
            zbar += z;
        }
        zbar /= n as f64;
        let consensus_err_max = self
            .z
            .iter()
            .map(|z| (&zbar - z).norm())
            .fold(0.0, f64::max);

        IterationRow {
            k,
            alpha: self.cfg.alpha_at(self.schedule_k),
            beta: self.cfg.beta_at(self.schedule_k),
            eta: self.cfg.schedules.eta(self.schedule_k),
            gap_avg,
            gap_node,
            gap_node_max,
            gap_avg_iterate_max,
            consensus_err_max,
            power_avg: self.ledger.max_average_power(),
        }
    }
}

/// Runs the configured algorithm for `horizon` rounds (or until the first
/// saturation) and collects per-iteration metrics against `f_star`.
pub fn run<L: LocalObjective>(
    cfg: &EngineConfig,
    locals: &[L],
    f_star: f64,
) -> Result<RunRecord, EngineError> {
    let mut sim = Simulation::new(cfg, locals)?;
    let mut rows = Vec::with_capacity(cfg.horizon as usize);
    let mut status = RunStatus::Completed;

    for k in 1..=cfg.horizon {
        // the row reflects the pre-step state; accumulate x(k) first so the
        // running average at row k covers iterates 1..=k
        sim.accumulate_average();
        rows.push(sim.metrics_row(k, f_star));

        match sim.step_inner() {
            StepOutcome::Ok { .. } => {}
            StepOutcome::Failure {
                iteration,
                sender,
                receiver,
            } => {
                status = RunStatus::Saturated {
                    iteration,
                    sender,
                    receiver,
                };
                break;
            }
        }
    }

    let k_reached = match status {
        RunStatus::Completed => cfg.horizon,
        RunStatus::Saturated { iteration, .. } => iteration - 1,
    };
    let count = rows.len().max(1) as f64;
    let global = |x: &Vector| {
        locals.iter().map(|l| l.value(x)).sum::<f64>() / locals.len() as f64
    };
    let final_gap_avg_iterate: Vec<f64> = (0..sim.node_count())
        .map(|i| global(&(&sim.x_sum[i] / count)) - f_star)
        .collect();

    Ok(RunRecord {
        seed: cfg.seed,
        status,
        k_reached,
        rows,
        final_gap_avg_iterate,
        final_avg_power: sim.ledger.average_powers(),
        max_oracle_norm: sim.max_oracle_norm,
        max_subgradient_norm: sim.max_subgradient_norm,
        max_differential_inf: sim.max_differential_inf,
        restarts: sim.restarts,
    })
}
