//! Oscillation calculus and identifiability checks.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::{self, ErrorMatrix};
use crate::graphgen::{self, InteractionMatrix};
use crate::linalg;
use crate::noise::{CovarianceSpec, InterventionSpec};

/// `max - min`.
pub fn osc(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("oscillation of an empty collection".into()));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(hi - lo)
}

/// Oscillation over the `n(n-1)` off-diagonal entries; `(i, j)` and
/// `(j, i)` count separately.
pub fn osc_offdiag(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || m.nrows() < 2 {
        return Err(Error::Parameter(format!(
            "off-diagonal oscillation needs a square matrix of size >= 2, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    osc(&linalg::off_diagonal(m))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flatness {
    pub holds: bool,
    /// `A+_min / 2 - Osc(Off(E_S))`
    pub slack: f64,
}

/// Whether the error is flat enough not to invert any pair: inclusive
/// `Osc(Off(E_S)) <= A+_min / 2`.
pub fn check_flatness(err: &ErrorMatrix, a_s: &DMatrix<f64>) -> Result<Flatness> {
    if err.values.shape() != a_s.shape() {
        return Err(Error::Parameter("error and interaction blocks differ in shape".into()));
    }
    let a_min = graphgen::a_plus_min(a_s)
        .ok_or_else(|| Error::Degenerate("observed block has no positive off-diagonal entry".into()))?;
    let slack = a_min / 2.0 - osc_offdiag(&err.values)?;
    Ok(Flatness { holds: slack >= 0.0, slack })
}

/// Right side of the sufficient condition on the noise oscillation.
pub fn theorem2_rhs(a_plus_min: f64, rho: f64) -> f64 {
    a_plus_min * (1.0 - rho * rho) / (2.0 * rho * (rho * rho + 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    /// `Osc(Off(E))` of the normalized limit error; only available when `A`
    /// is symmetric with a common row sum.
    pub osc_error: Option<f64>,
    pub a_plus_min: f64,
    pub rho: f64,
    /// False when `rho` came from the spectral radius instead of a common
    /// row sum, in which case the stochasticity premise is unverified.
    pub rho_is_row_sum: bool,
    pub eq5_holds: Option<bool>,
    pub thm2_lhs: f64,
    pub thm2_rhs: f64,
    pub thm2_margin: f64,
    pub min_intervention: f64,
    /// Separating threshold on the limit estimate, when one exists.
    pub threshold: Option<Threshold>,
}

impl ConsistencyReport {
    pub fn certified(&self) -> bool {
        self.thm2_margin >= 0.0
    }

    pub fn status(&self) -> &'static str {
        if self.certified() {
            "certified"
        } else {
            "uncertified"
        }
    }

    pub const CSV_HEADER: &'static str = "status,thm2_lhs,thm2_rhs,thm2_margin,min_intervention,a_plus_min,rho,rho_is_row_sum,osc_error,eq5_holds,threshold,threshold_gap";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.status(),
            self.thm2_lhs,
            self.thm2_rhs,
            self.thm2_margin,
            self.min_intervention,
            self.a_plus_min,
            self.rho,
            self.rho_is_row_sum,
            opt(self.osc_error),
            self.eq5_holds.map(|b| b.to_string()).unwrap_or_default(),
            opt(self.threshold.map(|t| t.tau)),
            opt(self.threshold.map(|t| t.gap)),
        )
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "status            {}", self.status())?;
        writeln!(f, "lhs               {}", self.thm2_lhs)?;
        writeln!(f, "rhs               {}", self.thm2_rhs)?;
        writeln!(f, "margin            {}", self.thm2_margin)?;
        writeln!(f, "min_intervention  {}", self.min_intervention)?;
        writeln!(f, "a_plus_min        {}", self.a_plus_min)?;
        write!(f, "rho               {}", self.rho)?;
        if !self.rho_is_row_sum {
            write!(f, " (spectral radius; row-stochastic premise unverified)")?;
        }
        writeln!(f)?;
        if let Some(o) = self.osc_error {
            writeln!(f, "osc_error         {o}")?;
        }
        if let Some(h) = self.eq5_holds {
            writeln!(f, "flatness          {h}")?;
        }
        if let Some(t) = self.threshold {
            writeln!(f, "threshold         {} (gap {})", t.tau, t.gap)?;
        }
        Ok(())
    }
}

struct Premises {
    a_plus_min: f64,
    rho: f64,
    rhs: f64,
    lhs: f64,
}

fn premises(a: &InteractionMatrix, sigma: &CovarianceSpec) -> Result<Premises> {
    if a.n() != sigma.n() {
        return Err(Error::Parameter("interaction matrix and covariance differ in size".into()));
    }
    let a_plus_min = a
        .a_plus_min()
        .ok_or_else(|| Error::Degenerate("interaction matrix has no positive off-diagonal entry".into()))?;
    let rho = a.rho();
    let rhs = theorem2_rhs(a_plus_min, rho);
    if !(rhs > 0.0) {
        return Err(Error::Degenerate(format!("bound is {rhs} for rho {rho}")));
    }
    Ok(Premises { a_plus_min, rho, rhs, lhs: sigma.off_diagonal_osc() / sigma.sigma2_gap() })
}

/// Evaluates the sufficient noise-flatness condition and, where the closed
/// form applies, the limit error and a separating threshold.
pub fn check_theorem2(a: &InteractionMatrix, sigma: &CovarianceSpec) -> Result<ConsistencyReport> {
    let p = premises(a, sigma)?;
    let closed_form = estimators::nig_limit_error(a.matrix(), sigma).ok();
    let osc_error = closed_form.as_ref().map(|e| osc_offdiag(&e.values)).transpose()?;
    let threshold = closed_form.as_ref().and_then(|e| find_threshold(&(a.matrix() + &e.values), &a.support()));
    Ok(ConsistencyReport {
        osc_error,
        a_plus_min: p.a_plus_min,
        rho: p.rho,
        rho_is_row_sum: a.has_constant_row_sum(),
        eq5_holds: osc_error.map(|o| o <= p.a_plus_min / 2.0),
        thm2_lhs: p.lhs,
        thm2_rhs: p.rhs,
        thm2_margin: p.rhs - p.lhs,
        min_intervention: intervention_for(&p, sigma)?,
        threshold,
    })
}

fn intervention_for(p: &Premises, sigma: &CovarianceSpec) -> Result<f64> {
    let osc = sigma.off_diagonal_osc();
    let mut v = (osc / p.rhs - sigma.sigma2_gap()).max(0.0);
    if v == 0.0 {
        return Ok(0.0);
    }
    // nudge past rounding so the check on the intervened noise passes
    for _ in 0..64 {
        let shifted = sigma.with_intervention(&InterventionSpec::new(v)?)?;
        if shifted.off_diagonal_osc() / shifted.sigma2_gap() <= p.rhs {
            return Ok(v);
        }
        v = v.next_up();
    }
    Err(Error::Conditioning(format!("no intervention variance near {v} passes the check")))
}

/// Smallest isotropic intervention variance that makes the noise condition
/// hold.
pub fn min_intervention(a: &InteractionMatrix, sigma: &CovarianceSpec) -> Result<f64> {
    let p = premises(a, sigma)?;
    intervention_for(&p, sigma)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    pub tau: f64,
    /// Minimum connected score minus maximum disconnected score.
    pub gap: f64,
}

/// Midpoint threshold separating connected from disconnected off-diagonal
/// entries, if the two sets do not overlap. Absent when either set is empty.
pub fn find_threshold(scores: &DMatrix<f64>, truth_support: &DMatrix<f64>) -> Option<Threshold> {
    if scores.shape() != truth_support.shape() || !scores.is_square() {
        return None;
    }
    let n = scores.nrows();
    let mut lo_conn = f64::INFINITY;
    let mut hi_disc = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = scores[(i, j)];
            if truth_support[(i, j)] != 0.0 {
                lo_conn = lo_conn.min(v);
            } else {
                hi_disc = hi_disc.max(v);
            }
        }
    }
    if !lo_conn.is_finite() || !hi_disc.is_finite() || lo_conn <= hi_disc {
        return None;
    }
    Some(Threshold { tau: hi_disc + (lo_conn - hi_disc) / 2.0, gap: lo_conn - hi_disc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{erdos_renyi, laplacian_weights};
    use crate::moments;
    use crate::noise::build_covariance;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn osc_examples() {
        assert_eq!(osc(&[1.0, 3.0, 2.0]).unwrap(), 2.0);
        assert_eq!(osc(&[4.0; 5]).unwrap(), 0.0);
        assert_eq!(osc(&[-1.0, 4.0]).unwrap(), 5.0);
        assert!(osc(&[]).is_err());
    }

    #[test]
    fn osc_offdiag_examples() {
        assert_eq!(osc_offdiag(&DMatrix::from_element(4, 4, 1.0)).unwrap(), 0.0);
        let m = DMatrix::from_fn(3, 3, |i, j| if i == j { i as f64 * 7.0 } else { 0.3 });
        assert_eq!(osc_offdiag(&m).unwrap(), 0.0);
        let m = DMatrix::from_row_slice(3, 3, &[9.0, 0.1, 0.2, 0.3, 9.0, 0.2, 0.1, 0.3, 9.0]);
        assert!((osc_offdiag(&m).unwrap() - 0.2).abs() < 1e-15);
        assert!(osc_offdiag(&DMatrix::from_element(1, 1, 1.0)).is_err());
    }

    fn err(values: DMatrix<f64>) -> ErrorMatrix {
        ErrorMatrix { values, provenance: estimators::ErrorProvenance::NigTheorem1 }
    }

    #[test]
    fn flatness_examples() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, 0.0, 0.4, 0.0, 0.5, 0.0, 0.5, 0.0]);
        let f = check_flatness(&err(DMatrix::from_element(3, 3, 2.0)), &a).unwrap();
        assert!(f.holds);
        assert_eq!(f.slack, 0.2);
        let mut e = DMatrix::zeros(3, 3);
        e[(0, 1)] = 0.2;
        let f = check_flatness(&err(e), &a).unwrap();
        assert!(f.holds);
        assert_eq!(f.slack, 0.0);
        assert!(matches!(check_flatness(&err(DMatrix::zeros(3, 3)), &DMatrix::zeros(3, 3)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn flatness_holds_without_residual_noise() {
        let g = erdos_renyi(8, 0.5, false, 1).unwrap();
        let a = laplacian_weights(&g, 0.5, 0.7).unwrap();
        for beta in [0.0, 5.0, 50.0] {
            let s = CovarianceSpec::flat(8, 1.0, beta).unwrap();
            let e = estimators::nig_limit_error(a.matrix(), &s).unwrap();
            assert!(check_flatness(&e, a.matrix()).unwrap().holds);
        }
    }

    #[test]
    fn theorem2_rhs_example() {
        assert!((theorem2_rhs(0.4, 0.6) - 0.156_862_745).abs() < 1e-8);
    }

    fn instance() -> InteractionMatrix {
        // nodes 0 and 1 coupled at 0.4, node 2 isolated; rows sum to 0.6
        InteractionMatrix::from_matrix(DMatrix::from_row_slice(3, 3, &[0.2, 0.4, 0.0, 0.4, 0.2, 0.0, 0.0, 0.0, 0.6]))
            .unwrap()
    }

    #[test]
    fn min_intervention_examples() {
        let a = instance();
        assert!((a.a_plus_min().unwrap() - 0.4).abs() < 1e-15);
        let flat = CovarianceSpec::flat(3, 1.0, 0.5).unwrap();
        assert_eq!(min_intervention(&a, &flat).unwrap(), 0.0);
        let report = check_theorem2(&a, &flat).unwrap();
        assert_eq!(report.thm2_lhs, 0.0);
        assert!(report.certified());

        // off-diagonals 0, 1, 0.5 around diagonal 2: Osc = 1, gap = 1
        let sigma =
            CovarianceSpec::from_matrix(DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 2.0]))
                .unwrap();
        assert_eq!(sigma.sigma2_gap(), 1.0);
        let v = min_intervention(&a, &sigma).unwrap();
        assert!((v - 5.375).abs() < 1e-6, "{v}");
        let report = check_theorem2(&a, &sigma).unwrap();
        assert!(!report.certified());
        assert_eq!(report.status(), "uncertified");
        let rescued = sigma.with_intervention(&InterventionSpec::new(v).unwrap()).unwrap();
        assert!(check_theorem2(&a, &rescued).unwrap().certified());
    }

    #[test]
    fn min_intervention_needs_edges() {
        let a = InteractionMatrix::from_matrix(DMatrix::from_diagonal_element(3, 3, 0.5)).unwrap();
        let s = CovarianceSpec::identity(3).unwrap();
        assert!(matches!(min_intervention(&a, &s), Err(Error::Degenerate(_))));
    }

    #[test]
    fn threshold_examples() {
        let a = instance();
        let t = find_threshold(a.matrix(), &a.support()).unwrap();
        assert!((t.tau - 0.2).abs() < 1e-15);
        let mut inverted = a.matrix().clone();
        inverted[(0, 2)] = 0.5;
        assert!(find_threshold(&inverted, &a.support()).is_none());
    }

    #[test]
    fn certified_instances_have_thresholds() {
        let mut rng = crate::rng::rng(11);
        let mut checked = 0;
        for t in 0..40u64 {
            let g = erdos_renyi(9, 0.5, false, t).unwrap();
            let Ok(a) = laplacian_weights(&g, 0.5, 0.6) else { continue };
            let rhs = theorem2_rhs(a.a_plus_min().unwrap(), 0.6);
            let osc = rhs * rng.random_range(0.0..0.95) * 2.0;
            let s = build_covariance(9, 2.0 + osc, 1.0, osc, t).unwrap();
            let r = check_theorem2(&a, &s).unwrap();
            if r.certified() {
                assert!(r.threshold.is_some());
                assert_eq!(r.eq5_holds, Some(true));
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn proof_chain_bound() {
        for t in 0..30u64 {
            let g = erdos_renyi(10, 0.4, false, t).unwrap();
            let Ok(a) = laplacian_weights(&g, 0.5, [0.4, 0.6, 0.8][t as usize % 3]) else { continue };
            let s = build_covariance(10, 5.0, 1.0, 2.0, t).unwrap();
            let e = estimators::nig_limit_error(a.matrix(), &s).unwrap();
            let unnormalized = e.values * s.sigma2_gap();
            let rho = a.rho();
            let bound = rho * (1.0 + rho * rho) / (1.0 - rho * rho) * s.off_diagonal_osc();
            assert!(osc_offdiag(&unnormalized).unwrap() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn limit_nig_scores_match_report_threshold() {
        let g = erdos_renyi(7, 0.5, false, 4).unwrap();
        let a = laplacian_weights(&g, 0.6, 0.6).unwrap();
        let s = build_covariance(7, 3.0, 1.0, 0.01, 2).unwrap();
        let m = moments::limit_moments(a.matrix(), s.matrix(), 3).unwrap();
        let nig = (m.lag(1) - m.lag(3)) / s.sigma2_gap();
        let report = check_theorem2(&a, &s).unwrap();
        let direct = find_threshold(&nig, &a.support()).unwrap();
        let t = report.threshold.unwrap();
        assert!((direct.tau - t.tau).abs() < 1e-9);
    }

    fn random_stochastic(n: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
        // symmetric doubly stochastic: convex mix of identity and symmetric
        // permutation averages
        let mut m = DMatrix::zeros(n, n);
        let k = 3;
        let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        for &wi in &w {
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            for i in 0..n {
                m[(i, perm[i])] += wi / 2.0;
                m[(perm[i], i)] += wi / 2.0;
            }
        }
        m
    }

    #[test]
    fn contraction_under_stochastic_matrices() {
        let mut rng = crate::rng::rng(5);
        for _ in 0..200 {
            let n = rng.random_range(2..12);
            let a = random_stochastic(n, &mut rng);
            assert!(linalg::row_sums(&a).iter().all(|s| (s - 1.0).abs() < 1e-12));
            let v = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
            let av = &a * &v;
            assert!(osc(av.as_slice()).unwrap() <= osc(v.as_slice()).unwrap() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn scalar_linearity(v in prop::collection::vec(-100.0f64..100.0, 1..20), c in -10.0f64..10.0) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let lhs = osc(&scaled).unwrap();
            let rhs = c.abs() * osc(&v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn subadditivity(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..20)) {
            let b: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let c: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let sum: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            prop_assert!(osc(&sum).unwrap() <= osc(&b).unwrap() + osc(&c).unwrap() + 1e-12);
        }

        #[test]
        fn submultiplicativity(seed in any::<u64>()) {
            let mut rng = crate::rng::rng(seed);
            let n = rng.random_range(2..8);
            let b = random_stochastic(n, &mut rng) * rng.random_range(0.1..2.0);
            let c = random_stochastic(n, &mut rng) * rng.random_range(0.1..2.0);
            // for a scaled stochastic matrix k = scale bounds Osc(Mv) / Osc(v)
            let kb = b.row_sum()[0];
            let kc = c.row_sum()[0];
            let v = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            let bv = &b * &v;
            prop_assert!(osc(bv.as_slice()).unwrap() <= kb * osc(v.as_slice()).unwrap() + 1e-12);
            let cbv = &c * &bv;
            prop_assert!(osc(cbv.as_slice()).unwrap() <= kb * kc * osc(v.as_slice()).unwrap() + 1e-12);
        }
    }
}
