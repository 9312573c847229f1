//! Random graphs, the Laplacian weight rule, adjacency loading and
//! observed-subset sampling.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Entries with absolute value above this count as edges when loading.
pub const EDGE_THRESHOLD: f64 = 1e-12;

/// Binary support graph. `adj[(i, j)] = 1` means an arrow `j -> i`
/// (row `i` collects the inputs of node `i`).
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    directed: bool,
    adj: DMatrix<f64>,
}

impl Graph {
    /// Builds a graph from any square matrix; nonzero off-diagonal entries
    /// become edges. Directedness is inferred from symmetry of the support
    /// unless `directed` overrides it.
    pub fn from_matrix(m: &DMatrix<f64>, directed: Option<bool>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Format(format!("adjacency must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        let adj = DMatrix::from_fn(n, n, |i, j| if i != j && m[(i, j)].abs() > EDGE_THRESHOLD { 1.0 } else { 0.0 });
        let symmetric = linalg::is_symmetric(&adj, 0.0);
        let directed = directed.unwrap_or(!symmetric);
        if !directed && !symmetric {
            return Err(Error::Format("undirected graph requested but support is not symmetric".into()));
        }
        Ok(Self { n, directed, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adj
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[(i, j)] != 0.0
    }

    /// In-degree of every node (row sums).
    pub fn in_degrees(&self) -> Vec<usize> {
        self.adj.row_iter().map(|r| r.iter().filter(|&&v| v != 0.0).count()).collect()
    }

    pub fn max_in_degree(&self) -> usize {
        self.in_degrees().into_iter().max().unwrap_or(0)
    }

    /// Number of edges: arrows if directed, unordered pairs otherwise.
    pub fn edge_count(&self) -> usize {
        let arrows = self.adj.iter().filter(|&&v| v != 0.0).count();
        if self.directed {
            arrows
        } else {
            arrows / 2
        }
    }
}

/// Erdős–Rényi graph (binomial digraph when `directed`). Pairs are visited
/// in row-major order, one uniform draw each: ordered pairs `i != j` when
/// directed, `i < j` otherwise.
pub fn erdos_renyi(n: usize, p: f64, directed: bool, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 nodes, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("edge probability {p} not in [0, 1]")));
    }
    let mut rng = rng::rng(seed);
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        let start = if directed { 0 } else { i + 1 };
        for j in start..n {
            if i == j {
                continue;
            }
            let u: f64 = rng.random();
            if u < p {
                adj[(i, j)] = 1.0;
                if !directed {
                    adj[(j, i)] = 1.0;
                }
            }
        }
    }
    Ok(Graph { n, directed, adj })
}

/// Reads an adjacency in the matrix text format.
pub fn load_adjacency(path: &Path, directed: Option<bool>) -> Result<Graph> {
    let m = linalg::read_matrix(path)?;
    Graph::from_matrix(&m, directed)
}

/// Nonnegative interaction matrix `A` with spectral radius `rho < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    a: DMatrix<f64>,
    rho: f64,
    alpha: Option<f64>,
    constant_row_sum: bool,
}

impl InteractionMatrix {
    /// Wraps an externally supplied matrix. `rho` is the common row sum
    /// when all rows agree to 1e-12, the spectral radius otherwise.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Format(format!("interaction matrix must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if a.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Assumption {
                assumption: "nonnegative interactions",
                detail: "interaction matrix has negative or non-finite entries".into(),
            });
        }
        let sums = linalg::row_sums(&a);
        let (lo, hi) = min_max(&sums);
        let constant_row_sum = hi - lo <= 1e-12 * hi.max(1.0);
        let rho = if constant_row_sum { hi } else { linalg::perron_radius(&a)? };
        if rho >= 1.0 {
            return Err(Error::Stability(format!("spectral radius {rho} >= 1")));
        }
        Ok(Self { a, rho, alpha: None, constant_row_sum })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Whether every row sums to `rho`, i.e. `A = rho * stochastic`.
    pub fn has_constant_row_sum(&self) -> bool {
        self.constant_row_sum
    }

    /// Binary support of the off-diagonal part.
    pub fn support(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i != j && self.a[(i, j)] != 0.0 { 1.0 } else { 0.0 })
    }

    /// Smallest positive off-diagonal entry.
    pub fn a_plus_min(&self) -> Option<f64> {
        a_plus_min(&self.a)
    }
}

/// Smallest positive off-diagonal entry of `m`.
pub fn a_plus_min(m: &DMatrix<f64>) -> Option<f64> {
    linalg::off_diagonal(m).into_iter().filter(|&v| v > 0.0).min_by(f64::total_cmp)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Laplacian rule: `A_ij = alpha * G_ij / d_max` off the diagonal with
/// `d_max` the largest in-degree, and `A_ii = rho - sum_{k != i} A_ik`, so
/// every row sums to `rho`.
pub fn laplacian_weights(g: &Graph, alpha: f64, rho: f64) -> Result<InteractionMatrix> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho {rho} must lie in (0, 1)")));
    }
    if !(alpha > 0.0) || alpha > rho {
        return Err(Error::Parameter(format!("alpha {alpha} must satisfy 0 < alpha <= rho = {rho}")));
    }
    let d_max = g.max_in_degree();
    if d_max == 0 {
        return Err(Error::Degenerate("graph has no edges".into()));
    }
    let n = g.n();
    let d_max = d_max as f64;
    let mut a = DMatrix::from_fn(n, n, |i, j| if i != j { alpha * g.adjacency()[(i, j)] / d_max } else { 0.0 });
    for i in 0..n {
        let off: f64 = (0..n).filter(|&k| k != i).map(|k| a[(i, k)]).sum();
        a[(i, i)] = rho - off;
    }
    Ok(InteractionMatrix { a, rho, alpha: Some(alpha), constant_row_sum: true })
}

/// Sorted set of observed node indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedSet {
    indices: Vec<usize>,
    n_total: usize,
}

impl ObservedSet {
    pub fn new(mut indices: Vec<usize>, n_total: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("observed indices must be distinct".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= n_total {
                return Err(Error::Parameter(format!("observed index {last} out of range for {n_total} nodes")));
            }
        }
        Ok(Self { indices, n_total })
    }

    pub fn full(n_total: usize) -> Self {
        Self { indices: (0..n_total).collect(), n_total }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.n_total
    }

    /// The latent nodes.
    pub fn complement(&self) -> ObservedSet {
        let mut mask = vec![false; self.n_total];
        for &i in &self.indices {
            mask[i] = true;
        }
        ObservedSet { indices: (0..self.n_total).filter(|&i| !mask[i]).collect(), n_total: self.n_total }
    }
}

/// Uniform subset of size `n_obs` without replacement, sorted.
pub fn sample_observed(n_total: usize, n_obs: usize, seed: u64) -> Result<ObservedSet> {
    if n_obs == 0 || n_obs > n_total {
        return Err(Error::Parameter(format!("cannot observe {n_obs} of {n_total} nodes")));
    }
    let mut rng = rng::rng(seed);
    let picked = index::sample(&mut rng, n_total, n_obs).into_vec();
    ObservedSet::new(picked, n_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn er_extreme_probabilities() {
        let empty = erdos_renyi(3, 0.0, false, 11).unwrap();
        assert_eq!(empty.adjacency(), &DMatrix::zeros(3, 3));
        let full = erdos_renyi(3, 1.0, true, 11).unwrap();
        let expected = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(full.adjacency(), &expected);
    }

    #[test]
    fn er_rejects_bad_parameters() {
        assert!(matches!(erdos_renyi(1, 0.5, false, 0), Err(Error::Parameter(_))));
        assert!(matches!(erdos_renyi(5, 1.5, false, 0), Err(Error::Parameter(_))));
        assert!(matches!(erdos_renyi(5, -0.1, false, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn er_edge_count_within_binomial_band() {
        // C(50,2) = 1225 pairs, mean 612.5, sd sqrt(1225/4) = 17.5
        let (mean, sd) = (612.5, 17.5);
        for s in 0..100 {
            let g = erdos_renyi(50, 0.5, false, 7 + s).unwrap();
            let e = g.edge_count() as f64;
            assert!((e - mean).abs() <= 4.0 * sd, "seed {s}: {e} edges");
            assert!(linalg::is_symmetric(g.adjacency(), 0.0));
        }
    }

    #[test]
    fn er_is_deterministic() {
        assert_eq!(erdos_renyi(20, 0.3, true, 5).unwrap(), erdos_renyi(20, 0.3, true, 5).unwrap());
    }

    #[test]
    fn laplacian_single_edge() {
        let g = Graph::from_matrix(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), None).unwrap();
        let a = laplacian_weights(&g, 0.4, 0.6).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.2, 0.4, 0.4, 0.2]);
        assert!((a.matrix() - expected).amax() < 1e-15);
        for s in linalg::row_sums(a.matrix()) {
            assert!((s - 0.6).abs() < 1e-15);
        }
        assert!((linalg::perron_radius(a.matrix()).unwrap() - 0.6).abs() < 1e-10);
    }

    #[test]
    fn laplacian_complete_three() {
        let g = erdos_renyi(3, 1.0, false, 0).unwrap();
        let a = laplacian_weights(&g, 0.5, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.25 };
                assert!((a.matrix()[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_uses_in_degree() {
        // arrows 1->0 and 2->0: node 0 has in-degree 2
        let m = DMatrix::from_row_slice(3, 3, &[0., 1., 1., 0., 0., 0., 0., 0., 0.]);
        let g = Graph::from_matrix(&m, None).unwrap();
        assert!(g.directed());
        assert_eq!(g.max_in_degree(), 2);
        let a = laplacian_weights(&g, 0.4, 0.8).unwrap();
        assert!((a.matrix()[(0, 1)] - 0.2).abs() < 1e-15);
        assert!((a.matrix()[(0, 0)] - 0.4).abs() < 1e-15);
        assert!((a.matrix()[(1, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn laplacian_rejects_degenerate_input() {
        let g = erdos_renyi(4, 0.0, false, 0).unwrap();
        assert!(matches!(laplacian_weights(&g, 0.3, 0.5), Err(Error::Degenerate(_))));
        let g = erdos_renyi(4, 1.0, false, 0).unwrap();
        assert!(matches!(laplacian_weights(&g, 0.6, 0.5), Err(Error::Parameter(_))));
        assert!(matches!(laplacian_weights(&g, 0.5, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn load_adjacency_examples() {
        let dir = tempfile::tempdir().unwrap();
        let und = dir.path().join("und.txt");
        std::fs::write(&und, "2 2\n0 1\n1 0\n").unwrap();
        let g = load_adjacency(&und, None).unwrap();
        assert!(!g.directed());
        assert_eq!(g.edge_count(), 1);

        let dir_path = dir.path().join("dir.txt");
        std::fs::write(&dir_path, "2 2\n0 1\n0 0\n").unwrap();
        let g = load_adjacency(&dir_path, None).unwrap();
        assert!(g.directed());
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 1));

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "2 3\n0 1 0\n1 0 0\n").unwrap();
        assert!(matches!(load_adjacency(&bad, None), Err(Error::Format(_))));
    }

    #[test]
    fn loaded_weights_are_binarized() {
        let m = DMatrix::from_row_slice(2, 2, &[0.3, 1e-13, 0.7, 0.0]);
        let g = Graph::from_matrix(&m, None).unwrap();
        assert_eq!(g.adjacency(), &DMatrix::from_row_slice(2, 2, &[0., 0., 1., 0.]));
    }

    #[test]
    fn sample_observed_examples() {
        assert_eq!(sample_observed(5, 5, 3).unwrap().indices(), &[0, 1, 2, 3, 4]);
        let one = sample_observed(5, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.indices()[0] < 5);
        let s = sample_observed(50, 30, 1).unwrap();
        assert_eq!(s.len(), 30);
        assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(sample_observed(5, 6, 0), Err(Error::Parameter(_))));
        assert_eq!(s, sample_observed(50, 30, 1).unwrap());
    }

    #[test]
    fn complement_partitions_nodes() {
        let s = ObservedSet::new(vec![4, 0, 2], 6).unwrap();
        assert_eq!(s.indices(), &[0, 2, 4]);
        assert_eq!(s.complement().indices(), &[1, 3, 5]);
        assert!(ObservedSet::full(3).complement().is_empty());
        assert!(ObservedSet::new(vec![1, 1], 3).is_err());
        assert!(ObservedSet::new(vec![3], 3).is_err());
    }

    proptest! {
        #[test]
        fn laplacian_invariants(n in 2usize..25, p in 0.05f64..1.0, seed in 0u64..1000,
                                rho in 0.05f64..0.95, frac in 0.05f64..=1.0, directed: bool) {
            let g = erdos_renyi(n, p, directed, seed).unwrap();
            prop_assume!(g.edge_count() > 0);
            let alpha = rho * frac;
            let a = laplacian_weights(&g, alpha, rho).unwrap();
            let m = a.matrix();
            prop_assert!(m.iter().all(|&v| v >= -1e-15));
            for s in linalg::row_sums(m) {
                prop_assert!((s - rho).abs() <= 1e-14);
            }
            prop_assert!((linalg::perron_radius(m).unwrap() - rho).abs() < 1e-10);
            prop_assert_eq!(a.support(), g.adjacency().clone());
            let doubled = laplacian_weights(&g, alpha / 2.0, rho).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        prop_assert_eq!(m[(i, j)], 2.0 * doubled.matrix()[(i, j)]);
                    }
                }
            }
        }

        #[test]
        fn laplacian_diagonal_identity(n in 2usize..20, p in 0.1f64..1.0, seed in 0u64..500, rho in 0.1f64..0.95) {
            let g = erdos_renyi(n, p, false, seed).unwrap();
            prop_assume!(g.edge_count() > 0);
            let a = laplacian_weights(&g, rho, rho).unwrap();
            let deg = g.in_degrees();
            let dmax = g.max_in_degree();
            for (i, &d) in deg.iter().enumerate() {
                let want = rho - rho * d as f64 / dmax as f64;
                prop_assert!((a.matrix()[(i, i)] - want).abs() < 1e-14);
                prop_assert!(a.matrix()[(i, i)] >= -1e-15);
                if d == dmax {
                    prop_assert!(a.matrix()[(i, i)].abs() < 1e-15);
                }
            }
        }
    }
}
