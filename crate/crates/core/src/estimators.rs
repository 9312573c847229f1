//! Matrix-valued estimators over the observed block and their analytic
//! limiting error matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphgen::ObservedSet;
use crate::linalg;
use crate::moments::{self, LagMoments};
use crate::noise::CovarianceSpec;
use crate::simulate::ObservedTimeSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// `[R_1]_S ([R_0]_S)^-1`
    Granger,
    /// `[R_1]_S`
    OneLag,
    /// `[R_1]_S - [R_3]_S`
    Nig,
    /// `([R_0]_S)^-1`
    Precision,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Granger, Method::OneLag, Method::Nig, Method::Precision];

    pub fn name(self) -> &'static str {
        match self {
            Method::Granger => "granger",
            Method::OneLag => "one_lag",
            Method::Nig => "nig",
            Method::Precision => "precision",
        }
    }

    /// Largest lag the estimator reads.
    pub fn max_lag(self) -> usize {
        match self {
            Method::Granger | Method::OneLag => 1,
            Method::Nig => 3,
            Method::Precision => 0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown estimator {s:?}")))
    }
}

/// An estimator output over the observed nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateMatrix {
    pub method: Method,
    pub values: DMatrix<f64>,
    pub n_samples: usize,
    pub observed: ObservedSet,
}

impl EstimateMatrix {
    /// Affinity scores, larger meaning more likely connected. Precision
    /// entries are negated (partial correlations are `-P_ij / ...`).
    pub fn scores(&self) -> DMatrix<f64> {
        match self.method {
            Method::Precision => -&self.values,
            _ => self.values.clone(),
        }
    }

    /// Values divided by a user-supplied `sigma2_gap` (display only; the gap
    /// is not observable).
    pub fn normalized(&self, sigma2_gap: f64) -> DMatrix<f64> {
        &self.values / sigma2_gap
    }

    /// `method,n,i,j,value` rows with global node indices.
    pub fn csv_rows(&self) -> Vec<String> {
        let idx = self.observed.indices();
        let mut rows = Vec::with_capacity(self.values.len());
        for a in 0..self.values.nrows() {
            for b in 0..self.values.ncols() {
                rows.push(format!("{},{},{},{},{}", self.method, self.n_samples, idx[a], idx[b], self.values[(a, b)]));
            }
        }
        rows
    }
}

/// Applies `method` to moments already restricted to the observed block.
pub fn estimate_from_moments(method: Method, m: &LagMoments, observed: &ObservedSet) -> Result<EstimateMatrix> {
    if m.max_lag() < method.max_lag() {
        return Err(Error::Parameter(format!(
            "{method} needs lag {} but only {} available",
            method.max_lag(),
            m.max_lag()
        )));
    }
    if m.dim() != observed.len() {
        return Err(Error::Parameter(format!(
            "moments are {}-dimensional but {} nodes are observed",
            m.dim(),
            observed.len()
        )));
    }
    let values = match method {
        Method::Granger => m.lag(1) * linalg::inverse_guarded(m.lag(0), "[R_0]_S")?,
        Method::OneLag => m.lag(1).clone(),
        Method::Nig => m.lag(1) - m.lag(3),
        Method::Precision => linalg::inverse_guarded(m.lag(0), "[R_0]_S")?,
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning(format!("{method}: non-finite estimate")));
    }
    Ok(EstimateMatrix { method, values, n_samples: m.n_samples(), observed: observed.clone() })
}

fn from_series(method: Method, ts: &ObservedTimeSeries, n: usize) -> Result<EstimateMatrix> {
    let m = moments::empirical_moments(ts.data(), method.max_lag(), n)?;
    estimate_from_moments(method, &m, ts.observed())
}

pub fn granger(ts: &ObservedTimeSeries, n: usize) -> Result<EstimateMatrix> {
    from_series(Method::Granger, ts, n)
}

pub fn one_lag(ts: &ObservedTimeSeries, n: usize) -> Result<EstimateMatrix> {
    from_series(Method::OneLag, ts, n)
}

pub fn nig(ts: &ObservedTimeSeries, n: usize) -> Result<EstimateMatrix> {
    from_series(Method::Nig, ts, n)
}

pub fn precision(ts: &ObservedTimeSeries, n: usize) -> Result<EstimateMatrix> {
    from_series(Method::Precision, ts, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorProvenance {
    GrangerDiagonal,
    GrangerColored,
    NigTheorem1,
}

/// Deterministic part of `estimate - A` in the large-sample limit.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMatrix {
    pub values: DMatrix<f64>,
    pub provenance: ErrorProvenance,
}

impl ErrorMatrix {
    pub fn restrict(&self, s: &ObservedSet) -> ErrorMatrix {
        ErrorMatrix { values: linalg::principal_submatrix(&self.values, s.indices()), provenance: self.provenance }
    }
}

/// Limiting Granger error on the observed block.
///
/// Without a covariance this is the isotropic-noise closed form
/// `A_SS' (I - [A^2]_S'S')^-1 [A^2]_S'S` (symmetric `A`). With one it is
/// the general block-inverse form `-A_SS' (P_S'S')^-1 P_S'S`, `P = R_0^-1`,
/// which agrees with the closed form whenever `Sigma` is a multiple of `I`.
pub fn granger_limit_error(a: &DMatrix<f64>, s: &ObservedSet, sigma: Option<&CovarianceSpec>) -> Result<ErrorMatrix> {
    if a.nrows() != s.n_total() || !a.is_square() {
        return Err(Error::Parameter("interaction matrix does not match observed set".into()));
    }
    let latent = s.complement();
    let obs = s.indices();
    let lat = latent.indices();
    let provenance = if sigma.is_some() { ErrorProvenance::GrangerColored } else { ErrorProvenance::GrangerDiagonal };
    if lat.is_empty() {
        return Ok(ErrorMatrix { values: DMatrix::zeros(obs.len(), obs.len()), provenance });
    }
    let a_sl = linalg::submatrix(a, obs, lat);
    let values = match sigma {
        None => {
            let a2 = a * a;
            let inner = DMatrix::identity(lat.len(), lat.len()) - linalg::principal_submatrix(&a2, lat);
            let inv = linalg::inverse_guarded(&inner, "I - [A^2]_S'")?;
            a_sl * inv * linalg::submatrix(&a2, lat, obs)
        }
        Some(sigma) => {
            if sigma.n() != a.nrows() {
                return Err(Error::Parameter("covariance dimension mismatch".into()));
            }
            let r0 = moments::limit_r0(a, sigma.matrix())?;
            let p = linalg::inverse_guarded(&r0, "R_0")?;
            let p_ll = linalg::inverse_guarded(&linalg::principal_submatrix(&p, lat), "[R_0^-1]_S'")?;
            -(a_sl * p_ll * linalg::submatrix(&p, lat, obs))
        }
    };
    Ok(ErrorMatrix { values, provenance })
}

/// Limiting error of the normalized `(R_1 - R_3) / sigma2_gap` estimator
/// over all nodes:
/// `(beta rho 11^T + (I - A^2) sum_i A^(i+1) Residual A^i) / sigma2_gap`.
///
/// Requires symmetric `A` with a common row sum `rho`.
pub fn nig_limit_error(a: &DMatrix<f64>, sigma: &CovarianceSpec) -> Result<ErrorMatrix> {
    let n = a.nrows();
    if !a.is_square() || sigma.n() != n {
        return Err(Error::Parameter("interaction matrix does not match covariance".into()));
    }
    let rho = common_row_sum(a)?;
    let residual_series = moments::plain_series(a, sigma.residual())?;
    let propagated = (DMatrix::identity(n, n) - a * a) * a * residual_series;
    let flat = DMatrix::from_element(n, n, sigma.beta() * rho);
    Ok(ErrorMatrix { values: (flat + propagated) / sigma.sigma2_gap(), provenance: ErrorProvenance::NigTheorem1 })
}

/// Row sum shared by every row of a symmetric nonnegative `A`.
pub fn common_row_sum(a: &DMatrix<f64>) -> Result<f64> {
    let scale = linalg::max_abs(a).max(f64::MIN_POSITIVE);
    if !linalg::is_symmetric(a, 1e-12 * scale) {
        return Err(Error::Assumption {
            assumption: "NDS stability",
            detail: "interaction matrix is not symmetric".into(),
        });
    }
    let sums = linalg::row_sums(a);
    let rho = sums[0];
    if sums.iter().any(|s| (s - rho).abs() > 1e-9 * rho.abs().max(1e-300)) {
        return Err(Error::Assumption {
            assumption: "NDS stability",
            detail: "rows of the interaction matrix do not share a common sum".into(),
        });
    }
    if !(rho < 1.0) {
        return Err(Error::Stability(format!("row sum {rho} >= 1")));
    }
    Ok(rho)
}
