//! Network graphs and the doubly stochastic matrices that govern consensus.
//!
//! A [`Topology`] couples an undirected graph with a doubly stochastic
//! mixing matrix `P` whose support respects the graph (`P[i,j] > 0` only on
//! edges or the diagonal). The consensus speed of the whole system is
//! controlled by the spectral quantity `lambda = max(lambda_2, -lambda_n)`,
//! the second largest eigenvalue magnitude of `P`.

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::{Matrix, Vector};

/// Row/column sums of a doubly stochastic matrix must hold to this tolerance.
pub const STOCHASTICITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (|P[{i},{j}] - P[{j},{i}]| = {dev:e})")]
    NotSymmetric { i: usize, j: usize, dev: f64 },
    #[error("matrix is not doubly stochastic ({axis} {index} sums to {sum})")]
    NotDoublyStochastic {
        axis: &'static str,
        index: usize,
        sum: f64,
    },
    #[error("matrix has negative entry P[{i},{j}] = {value}")]
    NegativeEntry { i: usize, j: usize, value: f64 },
    #[error("mixing weight beta must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),
}

/// An undirected network graph plus its doubly stochastic mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    /// Unordered node pairs `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    p: Matrix,
}

/// Eigenvalue summary of a mixing matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralInfo {
    /// Second-largest eigenvalue of `P`.
    pub lambda2: f64,
    /// Smallest eigenvalue of `P`.
    pub lambda_n: f64,
    /// `max(lambda2, -lambda_n)`: second-largest eigenvalue magnitude.
    pub lambda: f64,
}

impl SpectralInfo {
    /// Computes the spectral summary of a symmetric matrix via a dense
    /// symmetric eigendecomposition.
    pub fn from_matrix(p: &Matrix) -> Result<Self, TopologyError> {
        check_symmetric(p)?;
        let eigen = SymmetricEigen::new(p.clone());
        let mut values: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let lambda2 = if values.len() > 1 { values[1] } else { values[0] };
        let lambda_n = *values.last().unwrap();
        Ok(SpectralInfo {
            lambda2,
            lambda_n,
            lambda: lambda2.max(-lambda_n),
        })
    }
}

impl Topology {
    /// Fully connected topology: `P[i,j] = 1/n` for all pairs.
    pub fn fully_connected(n: usize) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::TooFewNodes { min: 2, got: n });
        }
        let p = Matrix::from_element(n, n, 1.0 / n as f64);
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Ok(Topology { n, edges, p })
    }

    /// Ring with 2 neighbors: equal weight 1/3 on self, left, and right.
    ///
    /// The diagonal carries the remaining 1/3 so each row sums to one; the
    /// off-diagonal support is `j = i ± 1 (mod n)`.
    pub fn ring(n: usize) -> Result<Self, TopologyError> {
        if n < 3 {
            return Err(TopologyError::TooFewNodes { min: 3, got: n });
        }
        let w = 1.0 / 3.0;
        let mut p = Matrix::zeros(n, n);
        let mut edges = Vec::with_capacity(n);
        for i in 0..n {
            p[(i, i)] = w;
            let left = (i + n - 1) % n;
            let right = (i + 1) % n;
            p[(i, left)] = w;
            p[(i, right)] = w;
            let (a, b) = if i < right { (i, right) } else { (right, i) };
            if !edges.contains(&(a, b)) {
                edges.push((a, b));
            }
        }
        edges.sort_unstable();
        Ok(Topology { n, edges, p })
    }

    /// Builds a topology from an explicit mixing matrix.
    ///
    /// Validates symmetry, nonnegativity, and double stochasticity; the edge
    /// set is derived from the off-diagonal support. Connectivity is *not*
    /// enforced here (disconnected and single-node systems are legitimate
    /// degenerate configurations); the built-in constructors always produce
    /// connected graphs, and [`Topology::is_connected`] reports the property.
    pub fn from_matrix(p: Matrix) -> Result<Self, TopologyError> {
        if p.nrows() != p.ncols() {
            return Err(TopologyError::NotSquare {
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        let n = p.nrows();
        if n == 0 {
            return Err(TopologyError::TooFewNodes { min: 1, got: 0 });
        }
        check_symmetric(&p)?;
        check_doubly_stochastic(&p)?;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if p[(i, j)] > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Ok(Topology { n, edges, p })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// The mixing matrix `P`.
    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    /// Neighbors of node `i`, ascending. Excludes `i` itself.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// All directed links `(sender, receiver)`, in deterministic order
    /// (sender ascending, then receiver ascending). The simulation consumes
    /// random streams in exactly this order.
    pub fn directed_links(&self) -> Vec<(usize, usize)> {
        let mut links = Vec::with_capacity(2 * self.edges.len());
        for sender in 0..self.n {
            for receiver in self.neighbors(sender) {
                links.push((sender, receiver));
            }
        }
        links
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Spectral summary of the mixing matrix.
    pub fn spectral_info(&self) -> SpectralInfo {
        SpectralInfo::from_matrix(&self.p).expect("constructors guarantee a symmetric P")
    }

    /// Time-varying consensus matrix `W = (1 - beta) I + beta P`.
    pub fn mixing_matrix(&self, beta: f64) -> Result<Matrix, TopologyError> {
        if !(0.0..=1.0).contains(&beta) || beta.is_nan() {
            return Err(TopologyError::BetaOutOfRange(beta));
        }
        let mut w = &self.p * beta;
        for i in 0..self.n {
            w[(i, i)] += 1.0 - beta;
        }
        Ok(w)
    }
}

fn check_symmetric(p: &Matrix) -> Result<(), TopologyError> {
    for i in 0..p.nrows() {
        for j in (i + 1)..p.ncols() {
            let dev = (p[(i, j)] - p[(j, i)]).abs();
            if dev > STOCHASTICITY_TOL {
                return Err(TopologyError::NotSymmetric { i, j, dev });
            }
        }
    }
    Ok(())
}

fn check_doubly_stochastic(p: &Matrix) -> Result<(), TopologyError> {
    let n = p.nrows();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] < 0.0 {
                return Err(TopologyError::NegativeEntry {
                    i,
                    j,
                    value: p[(i, j)],
                });
            }
        }
    }
    for i in 0..n {
        let row: f64 = (0..n).map(|j| p[(i, j)]).sum();
        if (row - 1.0).abs() > STOCHASTICITY_TOL {
            return Err(TopologyError::NotDoublyStochastic {
                axis: "row",
                index: i,
                sum: row,
            });
        }
        let col: f64 = (0..n).map(|j| p[(j, i)]).sum();
        if (col - 1.0).abs() > STOCHASTICITY_TOL {
            return Err(TopologyError::NotDoublyStochastic {
                axis: "column",
                index: i,
                sum: col,
            });
        }
    }
    Ok(())
}

/// Upper bound on `||Phi(k,s) x - 1/n||_2` for products of consensus
/// matrices `Phi(k,s) = W(k) W(k-1) ... W(s)` built with the confidence
/// sequence `beta(t) = c0 t^{-gamma}`, valid for any `x` in the unit simplex:
///
/// `exp(-c0 (1 - lambda) / (1 - gamma) * ((k+1)^{1-gamma} - s^{1-gamma}))`
pub fn mixing_decay_bound(c0: f64, gamma: f64, lambda: f64, k: u64, s: u64) -> f64 {
    let e = 1.0 - gamma;
    let window = ((k + 1) as f64).powf(e) - (s as f64).powf(e);
    (-c0 * (1.0 - lambda) / e * window).exp()
}

/// Outcome of sweeping [`mixing_decay_bound`] against measured products.
#[derive(Debug, Clone, Copy)]
pub struct MixingDecayReport {
    /// True when no window/vector pair exceeded the bound.
    pub holds: bool,
    /// Largest observed `||Phi x - 1/n|| / bound` ratio.
    pub worst_ratio: f64,
    /// Number of `(k, s)` windows examined.
    pub windows: usize,
}

/// Measures `||Phi(k,s) x - 1/n||_2` for every window `1 <= s <= k <= k_max`
/// and `n_vectors` random simplex vectors, against [`mixing_decay_bound`].
///
/// `beta(t) = c0 t^{-gamma}` must stay in `[0, 1]`, which holds for
/// `c0 <= 1`.
pub fn verify_mixing_decay(
    t: &Topology,
    c0: f64,
    gamma: f64,
    k_max: u64,
    n_vectors: usize,
    seed: u64,
) -> MixingDecayReport {
    use rand::Rng;
    use rand::SeedableRng;

    let n = t.node_count();
    let lambda = t.spectral_info().lambda;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vector> = (0..n_vectors)
        .map(|_| {
            // normalized exponentials land uniformly on the simplex
            let mut v = Vector::zeros(n);
            let mut total = 0.0;
            for i in 0..n {
                let e = -(1.0 - rng.random::<f64>()).ln();
                v[i] = e;
                total += e;
            }
            v / total
        })
        .collect();
    let uniform = Vector::from_element(n, 1.0 / n as f64);

    let beta_at = |t_idx: u64| c0 * (t_idx as f64).powf(-gamma);
    let mut holds = true;
    let mut worst_ratio = 0.0f64;
    let mut windows = 0usize;
    for s in 1..=k_max {
        let mut phi = t.mixing_matrix(beta_at(s)).expect("beta in range");
        for k in s..=k_max {
            if k > s {
                let w = t.mixing_matrix(beta_at(k)).expect("beta in range");
                phi = w * &phi;
            }
            windows += 1;
            let bound = mixing_decay_bound(c0, gamma, lambda, k, s);
            for x in &vectors {
                let lhs = (&phi * x - &uniform).norm();
                if lhs > bound + 1e-10 {
                    holds = false;
                }
                // once both sides underflow toward zero the ratio stops
                // being informative
                if bound > 1e-10 {
                    worst_ratio = worst_ratio.max(lhs / bound);
                }
            }
        }
    }
    MixingDecayReport {
        holds,
        worst_ratio,
        windows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_doubly_stochastic(p: &Matrix) {
        check_doubly_stochastic(p).unwrap();
    }

    #[test]
    fn fully_connected_entries_are_one_over_n() {
        let t = Topology::fully_connected(10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert!((t.matrix()[(i, j)] - 0.1).abs() < 1e-15);
            }
        }
        assert_eq!(t.edge_count(), 45);
        assert!(t.is_connected());
        assert_doubly_stochastic(t.matrix());
    }

    #[test]
    fn fully_connected_two_nodes() {
        let t = Topology::fully_connected(2).unwrap();
        for v in t.matrix().iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn fully_connected_lambda_is_zero() {
        // rank-one doubly stochastic matrix: all non-principal eigenvalues 0
        let t = Topology::fully_connected(10).unwrap();
        let s = t.spectral_info();
        assert!(s.lambda2.abs() < 1e-12, "lambda2 = {}", s.lambda2);
        assert!(s.lambda.abs() < 1e-12);
    }

    #[test]
    fn fully_connected_rejects_single_node() {
        assert!(matches!(
            Topology::fully_connected(1),
            Err(TopologyError::TooFewNodes { min: 2, got: 1 })
        ));
    }

    #[test]
    fn ring_row_weights() {
        let t = Topology::ring(5).unwrap();
        let row0: Vec<f64> = (0..5).map(|j| t.matrix()[(0, j)]).collect();
        let third = 1.0 / 3.0;
        let expected = [third, third, 0.0, 0.0, third];
        for (got, want) in row0.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-15, "row0 = {row0:?}");
        }
        assert_eq!(t.edge_count(), 5);
        assert!(t.is_connected());
        assert_doubly_stochastic(t.matrix());
    }

    #[test]
    fn three_ring_is_complete() {
        let t = Topology::ring(3).unwrap();
        for v in t.matrix().iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ring_rejects_n_below_three() {
        assert!(Topology::ring(2).is_err());
    }

    #[test]
    fn ring_lambda_matches_circulant_spectrum() {
        // circulant eigenvalues (1 + 2 cos(2 pi j / n)) / 3; the second
        // largest magnitude is the max over j >= 1 of |...|
        for n in [4usize, 5, 10, 17] {
            let t = Topology::ring(n).unwrap();
            let s = t.spectral_info();
            let mut expected: f64 = 0.0;
            for j in 1..n {
                let ev = (1.0 + 2.0 * (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos())
                    / 3.0;
                expected = expected.max(ev.abs());
            }
            assert!(
                (s.lambda - expected).abs() < 1e-10,
                "n={n}: lambda={} expected={expected}",
                s.lambda
            );
        }
    }

    #[test]
    fn spectral_info_rejects_asymmetric_matrix() {
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.6]);
        assert!(matches!(
            SpectralInfo::from_matrix(&p),
            Err(TopologyError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn identity_matrix_has_lambda_one() {
        let s = SpectralInfo::from_matrix(&Matrix::identity(6, 6)).unwrap();
        assert!((s.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_matrix_identity_is_disconnected() {
        let t = Topology::from_matrix(Matrix::identity(4, 4)).unwrap();
        assert_eq!(t.edge_count(), 0);
        assert!(!t.is_connected());
    }

    #[test]
    fn from_matrix_supports_single_node() {
        let t = Topology::from_matrix(Matrix::identity(1, 1)).unwrap();
        assert_eq!(t.node_count(), 1);
        assert!(t.neighbors(0).is_empty());
    }

    #[test]
    fn from_matrix_rejects_non_stochastic() {
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.4, 0.4, 0.5]);
        assert!(matches!(
            Topology::from_matrix(p),
            Err(TopologyError::NotDoublyStochastic { .. })
        ));
    }

    #[test]
    fn mixing_matrix_limits() {
        let t = Topology::fully_connected(4).unwrap();
        let w0 = t.mixing_matrix(0.0).unwrap();
        assert_eq!(w0, Matrix::identity(4, 4));
        let w1 = t.mixing_matrix(1.0).unwrap();
        assert_eq!(&w1, t.matrix());
    }

    #[test]
    fn mixing_matrix_half_on_two_nodes() {
        let t = Topology::fully_connected(2).unwrap();
        let w = t.mixing_matrix(0.5).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!((w - expected).abs().max() < 1e-15);
    }

    #[test]
    fn mixing_matrix_rejects_beta_out_of_range() {
        let t = Topology::ring(5).unwrap();
        assert!(t.mixing_matrix(-0.1).is_err());
        assert!(t.mixing_matrix(1.1).is_err());
        assert!(t.mixing_matrix(f64::NAN).is_err());
    }

    #[test]
    fn directed_links_cover_both_directions_sorted() {
        let t = Topology::ring(4).unwrap();
        let links = t.directed_links();
        assert_eq!(links.len(), 8);
        let mut sorted = links.clone();
        sorted.sort_unstable();
        assert_eq!(links, sorted);
        for &(s, r) in &links {
            assert!(links.contains(&(r, s)));
        }
    }

    proptest! {
        #[test]
        fn mixing_matrix_stays_doubly_stochastic(beta in 0.0f64..=1.0, ring in proptest::bool::ANY) {
            let t = if ring { Topology::ring(7).unwrap() } else { Topology::fully_connected(6).unwrap() };
            let w = t.mixing_matrix(beta).unwrap();
            prop_assert!(check_doubly_stochastic(&w).is_ok());
        }
    }

    #[test]
    fn mixing_products_respect_decay_bound_small() {
        for t in [Topology::ring(5).unwrap(), Topology::fully_connected(5).unwrap()] {
            for gamma in [0.1, 0.5] {
                let report = verify_mixing_decay(&t, 1.0, gamma, 200, 10, 17);
                assert!(
                    report.holds,
                    "bound violated (gamma={gamma}), worst ratio {}",
                    report.worst_ratio
                );
                assert!(report.windows > 0);
            }
        }
    }
}
