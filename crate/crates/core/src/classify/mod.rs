//! From scores and features to a binary graph estimate, and its accuracy.

pub mod ffnn;
pub mod gmm;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::ordered_pairs;

pub use ffnn::{ffnn_train, FfnnModel, TrainingSpec};
pub use gmm::{gmm_fit_predict, GmmModel};

/// Estimated support over the observed nodes, zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphEstimate {
    pub support: DMatrix<f64>,
    pub scores: Option<DMatrix<f64>>,
}

impl GraphEstimate {
    /// Builds the support from per-pair labels.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)], labels: &[bool]) -> Result<Self> {
        if pairs.len() != labels.len() {
            return Err(Error::Parameter("one label per pair required".into()));
        }
        let mut support = DMatrix::zeros(n, n);
        for (&(i, j), &l) in pairs.iter().zip(labels) {
            if i == j || i >= n || j >= n {
                return Err(Error::Parameter(format!("invalid pair ({i}, {j})")));
            }
            support[(i, j)] = f64::from(u8::from(l));
        }
        Ok(Self { support, scores: None })
    }

    /// Thresholds a score matrix at `tau` (strictly above is connected).
    pub fn from_threshold(scores: &DMatrix<f64>, tau: f64) -> Self {
        let support = DMatrix::from_fn(scores.nrows(), scores.ncols(), |i, j| {
            f64::from(u8::from(i != j && scores[(i, j)] > tau))
        });
        Self { support, scores: Some(scores.clone()) }
    }

    /// Clusters the off-diagonal scores with a two-component mixture.
    pub fn from_gmm(scores: &DMatrix<f64>, seed: u64) -> Result<Self> {
        let n = scores.nrows();
        let pairs = ordered_pairs(n);
        let values: Vec<f64> = pairs.iter().map(|&ij| scores[ij]).collect();
        let (labels, _) = gmm_fit_predict(&values, seed)?;
        let mut est = Self::from_pairs(n, &pairs, &labels)?;
        est.scores = Some(scores.clone());
        Ok(est)
    }
}

/// Fraction of correctly classified off-diagonal pairs.
///
/// Directed: over the `n(n-1)` ordered pairs. Undirected: over the
/// `n(n-1)/2` unordered pairs, a pair counting only when both of its
/// orientations are correct.
pub fn accuracy(pred: &GraphEstimate, truth: &DMatrix<f64>, directed: bool) -> Result<f64> {
    let n = truth.nrows();
    if pred.support.shape() != truth.shape() || !truth.is_square() {
        return Err(Error::Parameter("estimate and truth differ in shape".into()));
    }
    if n < 2 {
        return Err(Error::Parameter("accuracy needs at least two nodes".into()));
    }
    let ok = |i: usize, j: usize| (pred.support[(i, j)] != 0.0) == (truth[(i, j)] != 0.0);
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j || (!directed && j < i) {
                continue;
            }
            total += 1;
            if ok(i, j) && (directed || ok(j, i)) {
                good += 1;
            }
        }
    }
    Ok(good as f64 / total as f64)
}

/// Best accuracy reachable by a single threshold on `scores` (an upper
/// reference for threshold rules; 1.0 whenever the classes do not overlap).
pub fn oracle_threshold_accuracy(scores: &DMatrix<f64>, truth: &DMatrix<f64>, directed: bool) -> Result<f64> {
    let n = scores.nrows();
    if scores.shape() != truth.shape() {
        return Err(Error::Parameter("scores and truth differ in shape".into()));
    }
    let mut candidates: Vec<f64> = ordered_pairs(n).iter().map(|&ij| scores[ij]).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut taus = vec![candidates[0] - 1.0];
    taus.extend(candidates);
    let mut best = 0.0_f64;
    for tau in taus {
        best = best.max(accuracy(&GraphEstimate::from_threshold(scores, tau), truth, directed)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth5() -> DMatrix<f64> {
        DMatrix::from_fn(5, 5, |i, j| f64::from(u8::from(i != j && (i + j) % 2 == 1)))
    }

    #[test]
    fn accuracy_examples() {
        let t = truth5();
        let exact = GraphEstimate { support: t.clone(), scores: None };
        assert_eq!(accuracy(&exact, &t, true).unwrap(), 1.0);
        let comp = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { 1.0 - t[(i, j)] });
        let comp = GraphEstimate { support: comp, scores: None };
        assert_eq!(accuracy(&comp, &t, true).unwrap(), 0.0);
        let mut one = t.clone();
        one[(0, 2)] = 1.0;
        let one = GraphEstimate { support: one, scores: None };
        assert_eq!(accuracy(&one, &t, true).unwrap(), 0.95);
        // undirected: the broken unordered pair {0, 2} is one of 10
        assert_eq!(accuracy(&one, &t, false).unwrap(), 0.9);
        let bad = GraphEstimate { support: DMatrix::zeros(4, 4), scores: None };
        assert!(accuracy(&bad, &t, true).is_err());
    }

    #[test]
    fn gmm_and_threshold_estimates() {
        let t = truth5();
        let scores = &t * 2.0 + DMatrix::from_fn(5, 5, |i, j| 0.01 * (i * 5 + j) as f64);
        let g = GraphEstimate::from_gmm(&scores, 3).unwrap();
        assert_eq!(accuracy(&g, &t, true).unwrap(), 1.0);
        assert_eq!(g.support.diagonal().amax(), 0.0);
        assert_eq!(oracle_threshold_accuracy(&scores, &t, true).unwrap(), 1.0);
        let th = GraphEstimate::from_threshold(&scores, 1.0);
        assert_eq!(th.support, t);
    }

    #[test]
    fn from_pairs_rejects_diagonal() {
        assert!(GraphEstimate::from_pairs(3, &[(1, 1)], &[true]).is_err());
    }
}
