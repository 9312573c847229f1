//! Two-component Gaussian mixture on scalar scores.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

const RESTARTS: usize = 50;
const MAX_ITER: usize = 500;
const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Components ordered by mean; `components[1]` is the "connected" one.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub components: [Component; 2],
    /// Mean log-likelihood per point at convergence.
    pub log_likelihood: f64,
}

impl GmmModel {
    fn log_density(c: &Component, x: f64) -> f64 {
        let d = x - c.mean;
        c.weight.ln() - 0.5 * (std::f64::consts::TAU * c.var).ln() - d * d / (2.0 * c.var)
    }

    /// Posterior probability of the upper component.
    pub fn posterior(&self, x: f64) -> f64 {
        let l0 = Self::log_density(&self.components[0], x);
        let l1 = Self::log_density(&self.components[1], x);
        1.0 / (1.0 + (l0 - l1).exp())
    }

    /// Labels by posterior, made monotone: scores below the lower mean are
    /// never connected, scores above the upper mean always are.
    pub fn predict(&self, x: f64) -> bool {
        if x <= self.components[0].mean {
            return false;
        }
        if x >= self.components[1].mean {
            return true;
        }
        self.posterior(x) > 0.5
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn em(x: &[f64], init: [f64; 2], var0: f64, floor: f64) -> GmmModel {
    let n = x.len() as f64;
    let mut c =
        [Component { weight: 0.5, mean: init[0], var: var0 }, Component { weight: 0.5, mean: init[1], var: var0 }];
    let mut resp = vec![0.0; x.len()];
    let mut prev = f64::NEG_INFINITY;
    let mut ll = prev;
    for _ in 0..MAX_ITER {
        // E step
        let mut total = 0.0;
        for (r, &xi) in resp.iter_mut().zip(x) {
            let l0 = GmmModel::log_density(&c[0], xi);
            let l1 = GmmModel::log_density(&c[1], xi);
            let m = l0.max(l1);
            let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            *r = (l1 - lse).exp();
            total += lse;
        }
        ll = total / n;
        if (ll - prev).abs() < TOL {
            break;
        }
        prev = ll;
        // M step
        let w1: f64 = resp.iter().sum();
        let w0 = n - w1;
        if w1 <= 0.0 || w0 <= 0.0 {
            break;
        }
        let m1 = resp.iter().zip(x).map(|(r, xi)| r * xi).sum::<f64>() / w1;
        let m0 = resp.iter().zip(x).map(|(r, xi)| (1.0 - r) * xi).sum::<f64>() / w0;
        let v1 = resp.iter().zip(x).map(|(r, xi)| r * (xi - m1).powi(2)).sum::<f64>() / w1;
        let v0 = resp.iter().zip(x).map(|(r, xi)| (1.0 - r) * (xi - m0).powi(2)).sum::<f64>() / w0;
        c = [
            Component { weight: w0 / n, mean: m0, var: v0.max(floor) },
            Component { weight: w1 / n, mean: m1, var: v1.max(floor) },
        ];
    }
    if c[0].mean > c[1].mean {
        c.swap(0, 1);
    }
    GmmModel { components: c, log_likelihood: ll }
}

/// Fits a two-component mixture with restarts and labels each score; the
/// component with the larger mean is "connected".
pub fn gmm_fit_predict(scores: &[f64], seed: u64) -> Result<(Vec<bool>, GmmModel)> {
    if scores.len() < 4 {
        return Err(Error::Parameter("mixture fit needs at least 4 scores".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Parameter("scores must be finite".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[sorted.len() - 1] - sorted[0];
    if !(range > 0.0) {
        return Err(Error::Degenerate("all scores are equal: single cluster".into()));
    }
    let floor = 1e-12 * range * range;
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var0 = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).max(floor);

    let mut r = rng::rng(seed);
    let mut best: Option<GmmModel> = None;
    for k in 0..RESTARTS {
        let (qa, qb) = if k == 0 { (0.25, 0.75) } else { (r.random_range(0.01..0.5), r.random_range(0.5..0.99)) };
        let fit = em(scores, [quantile(&sorted, qa), quantile(&sorted, qb)], var0, floor);
        if !fit.log_likelihood.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    let model = best.ok_or_else(|| Error::Degenerate("mixture fit failed on every restart".into()))?;
    let labels = scores.iter().map(|&s| model.predict(s)).collect();
    Ok((labels, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_split() {
        let (labels, m) = gmm_fit_predict(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(labels, vec![false, false, false, true, true, true]);
        assert!(m.components[0].mean < 0.5 && m.components[1].mean > 0.5);
        let w = m.components[0].weight + m.components[1].weight;
        assert!((w - 1.0).abs() < 1e-12);
    }

    fn blobs(seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut r = rng::rng(seed);
        let lo = Normal::new(0.0, 0.5).unwrap();
        let hi = Normal::new(5.0, 0.5).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..500 {
            let up = k % 2 == 1;
            x.push(if up { hi.sample(&mut r) } else { lo.sample(&mut r) });
            y.push(up);
        }
        (x, y)
    }

    #[test]
    fn separated_gaussians() {
        let (x, y) = blobs(3);
        let (labels, _) = gmm_fit_predict(&x, 9).unwrap();
        let correct = labels.iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / 500.0 >= 0.99);
    }

    #[test]
    fn equal_scores_are_degenerate() {
        assert!(matches!(gmm_fit_predict(&[2.0; 6], 0), Err(Error::Degenerate(_))));
        assert!(gmm_fit_predict(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn affine_invariance() {
        for seed in 0..10 {
            let (x, _) = blobs(seed);
            let (base, _) = gmm_fit_predict(&x, 4).unwrap();
            for (a, b) in [(3.0, -7.0), (1e-3, 2.0), (250.0, 1e4)] {
                let z: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let (labels, _) = gmm_fit_predict(&z, 4).unwrap();
                assert_eq!(labels, base);
            }
        }
    }
}
