//! Objectives, subgradient oracles, synthetic data, and proximal maps.
//!
//! The concrete learning task is soft-margin SVM training: node `i` holds
//! `m` labeled points and its local objective is
//! `f_i(x) = (1/m) sum_j max(0, 1 - b_ij <x, a_ij>) + (mu/2) ||x||^2`.
//! Points come from two Gaussian clusters with opposite means; with the
//! *polarized* layout every node holds a single class, which makes purely
//! local training useless and forces collaboration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::Vector;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{name} must be positive, got {got}")]
    NonPositive { name: &'static str, got: usize },
    #[error("label must be -1 or +1, got {0}")]
    BadLabel(f64),
    #[error("dimension mismatch: point has {got}, dataset has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Parameters for the synthetic two-cluster SVM data generator.
#[derive(Debug, Clone)]
pub struct SvmDataParams {
    pub nodes: usize,
    pub points_per_node: usize,
    pub dim: usize,
    /// Cluster means are `+/- class_mean_scale * e_1`.
    pub class_mean_scale: f64,
    /// Isotropic cluster standard deviation (covariance is
    /// `class_cov_scale^2 * I`).
    pub class_cov_scale: f64,
    /// One class per node when set; mixed labels otherwise.
    pub polarized: bool,
    pub regularization: f64,
    pub seed: u64,
}

/// Labeled data distributed over the nodes of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmDataset {
    /// `points[i][j]` is data point `j` of node `i`.
    points: Vec<Vec<Vector>>,
    /// Labels in `{-1, +1}`, same shape as `points`.
    labels: Vec<Vec<f64>>,
    dim: usize,
    regularization: f64,
}

impl SvmDataset {
    /// Draws a reproducible synthetic dataset: class `+1` points from
    /// `N(+s e_1, I)`, class `-1` points from `N(-s e_1, I)`.
    pub fn generate(p: &SvmDataParams) -> Result<Self, ProblemError> {
        for (name, v) in [
            ("nodes", p.nodes),
            ("points_per_node", p.points_per_node),
            ("dim", p.dim),
        ] {
            if v == 0 {
                return Err(ProblemError::NonPositive { name, got: v });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.class_cov_scale).unwrap();
        let mut points = Vec::with_capacity(p.nodes);
        let mut labels = Vec::with_capacity(p.nodes);
        for node in 0..p.nodes {
            let mut node_points = Vec::with_capacity(p.points_per_node);
            let mut node_labels = Vec::with_capacity(p.points_per_node);
            for _ in 0..p.points_per_node {
                let label = if p.polarized {
                    // first half of the nodes holds class +1
                    if node < p.nodes.div_ceil(2) {
                        1.0
                    } else {
                        -1.0
                    }
                } else if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                };
                let mut a = Vector::from_iterator(
                    p.dim,
                    (0..p.dim).map(|_| normal.sample(&mut rng)),
                );
                a[0] += label * p.class_mean_scale;
                node_points.push(a);
                node_labels.push(label);
            }
            points.push(node_points);
            labels.push(node_labels);
        }
        Ok(SvmDataset {
            points,
            labels,
            dim: p.dim,
            regularization: p.regularization,
        })
    }

    /// Builds a dataset from explicit per-node points and labels.
    pub fn from_parts(
        points: Vec<Vec<Vector>>,
        labels: Vec<Vec<f64>>,
        regularization: f64,
    ) -> Result<Self, ProblemError> {
        if points.is_empty() || points[0].is_empty() {
            return Err(ProblemError::NonPositive {
                name: "points",
                got: 0,
            });
        }
        let dim = points[0][0].len();
        for (node_pts, node_lbls) in points.iter().zip(labels.iter()) {
            for (a, &b) in node_pts.iter().zip(node_lbls.iter()) {
                if a.len() != dim {
                    return Err(ProblemError::DimensionMismatch {
                        got: a.len(),
                        expected: dim,
                    });
                }
                if b != 1.0 && b != -1.0 {
                    return Err(ProblemError::BadLabel(b));
                }
            }
        }
        Ok(SvmDataset {
            points,
            labels,
            dim,
            regularization,
        })
    }

    pub fn nodes(&self) -> usize {
        self.points.len()
    }

    pub fn points_per_node(&self) -> usize {
        self.points[0].len()
    }

    pub fn total_points(&self) -> usize {
        self.points.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Per-node objectives sharing this dataset.
    pub fn local_objectives(&self) -> Vec<SvmLocalObjective> {
        (0..self.nodes())
            .map(|i| SvmLocalObjective {
                points: self.points[i].clone(),
                labels: self.labels[i].clone(),
                regularization: self.regularization,
            })
            .collect()
    }

    /// Global objective `(1/n) sum_i f_i(x)`.
    pub fn global_value(&self, x: &Vector) -> f64 {
        let locals = self.local_objectives();
        locals.iter().map(|l| l.value(x)).sum::<f64>() / locals.len() as f64
    }

    /// A subgradient of the global objective.
    pub fn global_subgradient(&self, x: &Vector) -> Vector {
        let locals = self.local_objectives();
        let mut g = Vector::zeros(self.dim);
        for l in &locals {
            g += l.subgradient(x);
        }
        g / locals.len() as f64
    }
}

/// A node's view of the optimization problem.
pub trait LocalObjective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    /// An exact subgradient (full local batch).
    fn subgradient(&self, x: &Vector) -> Vector;
    /// An unbiased stochastic subgradient from a uniform mini-batch drawn
    /// with replacement. Falls back to the exact subgradient.
    fn minibatch_subgradient(&self, x: &Vector, _batch: usize, _rng: &mut ChaCha8Rng) -> Vector {
        self.subgradient(x)
    }
}

/// Hinge-plus-ridge local objective of one node.
#[derive(Debug, Clone)]
pub struct SvmLocalObjective {
    points: Vec<Vector>,
    labels: Vec<f64>,
    regularization: f64,
}

impl SvmLocalObjective {
    fn hinge_subgradient_of_point(&self, x: &Vector, j: usize) -> Option<Vector> {
        let margin = self.labels[j] * self.points[j].dot(x);
        // margin exactly 1 sits at the kink; the zero branch is a valid
        // subgradient and minimizes oracle norm
        if margin < 1.0 {
            Some(&self.points[j] * (-self.labels[j]))
        } else {
            None
        }
    }
}

impl LocalObjective for SvmLocalObjective {
    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let m = self.points.len() as f64;
        let hinge: f64 = self
            .points
            .iter()
            .zip(self.labels.iter())
            .map(|(a, &b)| (1.0 - b * a.dot(x)).max(0.0))
            .sum();
        hinge / m + 0.5 * self.regularization * x.norm_squared()
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        let m = self.points.len() as f64;
        let mut g = x * self.regularization;
        for j in 0..self.points.len() {
            if let Some(s) = self.hinge_subgradient_of_point(x, j) {
                g += s / m;
            }
        }
        g
    }

    fn minibatch_subgradient(&self, x: &Vector, batch: usize, rng: &mut ChaCha8Rng) -> Vector {
        if batch == 0 || batch >= self.points.len() {
            return self.subgradient(x);
        }
        let picker = Uniform::new(0, self.points.len()).unwrap();
        let mut g = x * self.regularization;
        for _ in 0..batch {
            let j = picker.sample(rng);
            if let Some(s) = self.hinge_subgradient_of_point(x, j) {
                g += s / batch as f64;
            }
        }
        g
    }
}

/// Proximal functions and their closed-form projections
/// `argmin_x <z, x> + psi(x) / eta`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProximalMap {
    /// `psi(x) = ||x||^2 / 2` over all of `R^d`.
    Quadratic,
    /// `psi(x) = sum_i x_i ln x_i - x_i` over the probability simplex.
    Entropy,
    /// `psi(x) = ||x - x_init||^2 / 2` over all of `R^d`.
    AnchoredQuadratic { x_init: Vector },
}

impl ProximalMap {
    /// The projection `argmin_x <z, x> + psi(x) / eta`. Panics on
    /// nonpositive `eta`.
    pub fn project(&self, z: &Vector, eta: f64) -> Vector {
        assert!(eta > 0.0, "step size must be positive, got {eta}");
        match self {
            ProximalMap::Quadratic => z * (-eta),
            ProximalMap::Entropy => {
                // x_i proportional to exp(-eta z_i); max-shift for overflow
                let neg = z * (-eta);
                let shift = neg.max();
                let mut x = neg.map(|v| (v - shift).exp());
                let total = x.sum();
                x /= total;
                x
            }
            ProximalMap::AnchoredQuadratic { x_init } => x_init - z * eta,
        }
    }

    /// `psi(x)` for this proximal function.
    pub fn psi(&self, x: &Vector) -> f64 {
        match self {
            ProximalMap::Quadratic => 0.5 * x.norm_squared(),
            ProximalMap::Entropy => x
                .iter()
                .map(|&v| if v > 0.0 { v * v.ln() - v } else { 0.0 })
                .sum::<f64>(),
            ProximalMap::AnchoredQuadratic { x_init } => 0.5 * (x - x_init).norm_squared(),
        }
    }
}
