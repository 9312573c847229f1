//! C interface to `ndscausal`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns an
//! [`NdsStatus`]; on failure a message is kept per thread and can be read
//! with [`nds_last_error`]. Matrices are exchanged in row-major order.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use ndscausal::estimators::{self, Method};
use ndscausal::graphgen::{self, InteractionMatrix, ObservedSet};
use ndscausal::noise::{self, CovarianceSpec, InterventionSpec};
use ndscausal::simulate::{self, TimeSeries};
use ndscausal::{linalg, theory, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NdsStatus {
    Ok = 0,
    NullPointer = 1,
    Parameter = 2,
    Degenerate = 3,
    Format = 4,
    Construction = 5,
    Assumption = 6,
    Stability = 7,
    Conditioning = 8,
    Length = 9,
    Divergence = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NdsMethod {
    Granger = 0,
    OneLag = 1,
    Nig = 2,
    Precision = 3,
}

impl From<NdsMethod> for Method {
    fn from(m: NdsMethod) -> Self {
        match m {
            NdsMethod::Granger => Method::Granger,
            NdsMethod::OneLag => Method::OneLag,
            NdsMethod::Nig => Method::Nig,
            NdsMethod::Precision => Method::Precision,
        }
    }
}

/// Dense real matrix.
pub struct NdsMatrix(DMatrix<f64>);

/// Interaction matrix `A` with spectral radius below one.
pub struct NdsInteraction(InteractionMatrix);

/// Noise covariance with its gap/offset/residual decomposition.
pub struct NdsCovariance(CovarianceSpec);

/// Structural-consistency check of an interaction matrix and a covariance.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NdsReport {
    /// 1 when the sufficient condition holds.
    pub certified: i32,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub min_intervention: f64,
    pub a_plus_min: f64,
    pub rho: f64,
    /// 1 when a separating threshold exists on the limit estimate.
    pub has_threshold: i32,
    pub threshold: f64,
    pub threshold_gap: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NdsStatus {
    match e {
        Error::Parameter(_) => NdsStatus::Parameter,
        Error::Degenerate(_) => NdsStatus::Degenerate,
        Error::Format(_) => NdsStatus::Format,
        Error::Construction(_) => NdsStatus::Construction,
        Error::Assumption { .. } => NdsStatus::Assumption,
        Error::Stability(_) => NdsStatus::Stability,
        Error::Conditioning(_) => NdsStatus::Conditioning,
        Error::Length(_) => NdsStatus::Length,
        Error::Divergence(_) => NdsStatus::Divergence,
        Error::Config(_) => NdsStatus::Config,
        Error::Io(_) => NdsStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NdsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            NdsStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            NdsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("output"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Error::Parameter("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- matrices ----

/// Copies `rows * cols` row-major values into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn nds_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut NdsMatrix,
) -> NdsStatus {
    guard(|| {
        if data.is_null() {
            return Err(Fail::Null("data"));
        }
        let len = rows.checked_mul(cols).ok_or_else(|| Error::Parameter("matrix too large".into()))?;
        let values = std::slice::from_raw_parts(data, len);
        put(out, NdsMatrix(DMatrix::from_row_slice(rows, cols, values)))
    })
}

/// Reads a matrix stored in the text format (`rows cols` header, then rows).
#[no_mangle]
pub unsafe extern "C" fn nds_matrix_load(path: *const c_char, out: *mut *mut NdsMatrix) -> NdsStatus {
    guard(|| put(out, NdsMatrix(linalg::read_matrix(path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn nds_matrix_save(m: *const NdsMatrix, path: *const c_char) -> NdsStatus {
    guard(|| Ok(linalg::write_matrix(path_arg(path)?, &deref(m, "matrix")?.0)?))
}

/// Row count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nds_matrix_rows(m: *const NdsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.nrows())
}

/// Column count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nds_matrix_cols(m: *const NdsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.ncols())
}

/// Writes the entries row-major into `buf`, which must hold `len >= rows * cols` values.
#[no_mangle]
pub unsafe extern "C" fn nds_matrix_copy(m: *const NdsMatrix, buf: *mut f64, len: usize) -> NdsStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.0;
        if buf.is_null() {
            return Err(Fail::Null("buffer"));
        }
        if len < m.len() {
            return Err(Error::Parameter(format!("buffer holds {len} values, need {}", m.len())).into());
        }
        let out = std::slice::from_raw_parts_mut(buf, m.len());
        for (k, v) in out.iter_mut().enumerate() {
            *v = m[(k / m.ncols(), k % m.ncols())];
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nds_matrix_free(m: *mut NdsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// ---- interaction matrices ----

/// Erdős–Rényi graph with Laplacian weights: off-diagonal `alpha / d_max`
/// on edges, diagonal completing each row sum to `rho`.
#[no_mangle]
pub unsafe extern "C" fn nds_interaction_random(
    n: usize,
    p: f64,
    directed: bool,
    alpha: f64,
    rho: f64,
    seed: u64,
    out: *mut *mut NdsInteraction,
) -> NdsStatus {
    guard(|| {
        let g = graphgen::erdos_renyi(n, p, directed, seed)?;
        put(out, NdsInteraction(graphgen::laplacian_weights(&g, alpha, rho)?))
    })
}

/// Validates an arbitrary square matrix as an interaction matrix.
#[no_mangle]
pub unsafe extern "C" fn nds_interaction_from_matrix(m: *const NdsMatrix, out: *mut *mut NdsInteraction) -> NdsStatus {
    guard(|| {
        let m = deref(m, "matrix")?.0.clone();
        put(out, NdsInteraction(InteractionMatrix::from_matrix(m)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn nds_interaction_matrix(a: *const NdsInteraction, out: *mut *mut NdsMatrix) -> NdsStatus {
    guard(|| put(out, NdsMatrix(deref(a, "interaction")?.0.matrix().clone())))
}

/// Spectral radius (the common row sum for Laplacian weights); NaN for null.
#[no_mangle]
pub unsafe extern "C" fn nds_interaction_rho(a: *const NdsInteraction) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.0.rho())
}

/// Smallest positive off-diagonal entry; NaN for null or an empty graph.
#[no_mangle]
pub unsafe extern "C" fn nds_interaction_a_plus_min(a: *const NdsInteraction) -> f64 {
    a.as_ref().and_then(|a| a.0.a_plus_min()).unwrap_or(f64::NAN)
}

#[no_mangle]
pub unsafe extern "C" fn nds_interaction_free(a: *mut NdsInteraction) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

// ---- covariances ----

/// Random covariance: diagonal `sigma2`, off-diagonal mean `beta`,
/// off-diagonal spread at most `osc`.
#[no_mangle]
pub unsafe extern "C" fn nds_covariance_random(
    n: usize,
    sigma2: f64,
    beta: f64,
    osc: f64,
    seed: u64,
    out: *mut *mut NdsCovariance,
) -> NdsStatus {
    guard(|| put(out, NdsCovariance(noise::build_covariance(n, sigma2, beta, osc, seed)?)))
}

#[no_mangle]
pub unsafe extern "C" fn nds_covariance_from_matrix(m: *const NdsMatrix, out: *mut *mut NdsCovariance) -> NdsStatus {
    guard(|| {
        let m = deref(m, "matrix")?.0.clone();
        put(out, NdsCovariance(CovarianceSpec::from_matrix(m)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn nds_covariance_matrix(c: *const NdsCovariance, out: *mut *mut NdsMatrix) -> NdsStatus {
    guard(|| put(out, NdsMatrix(deref(c, "covariance")?.0.matrix().clone())))
}

/// Diagonal minus the largest off-diagonal entry; NaN for null.
#[no_mangle]
pub unsafe extern "C" fn nds_covariance_gap(c: *const NdsCovariance) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.0.sigma2_gap())
}

/// Mean off-diagonal entry; NaN for null.
#[no_mangle]
pub unsafe extern "C" fn nds_covariance_beta(c: *const NdsCovariance) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.0.beta())
}

#[no_mangle]
pub unsafe extern "C" fn nds_covariance_free(c: *mut NdsCovariance) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// ---- simulation and estimation ----

/// Simulates `length` samples (rows) after `burn_in` discarded steps, with
/// an optional isotropic intervention of variance `intervention`.
#[no_mangle]
pub unsafe extern "C" fn nds_simulate(
    a: *const NdsInteraction,
    sigma: *const NdsCovariance,
    intervention: f64,
    length: usize,
    burn_in: usize,
    seed: u64,
    out: *mut *mut NdsMatrix,
) -> NdsStatus {
    guard(|| {
        let a = &deref(a, "interaction")?.0;
        let sigma = &deref(sigma, "covariance")?.0;
        let xi = InterventionSpec::new(intervention)?;
        let ts = simulate::simulate(a, sigma, &xi, length, burn_in, seed)?;
        put(out, NdsMatrix(ts.data().clone()))
    })
}

/// Estimates the interaction matrix over the observed nodes from the first
/// `n` rows of `series` (samples × nodes). A null `observed` means all nodes.
#[no_mangle]
pub unsafe extern "C" fn nds_estimate(
    series: *const NdsMatrix,
    observed: *const usize,
    n_observed: usize,
    method: NdsMethod,
    n: usize,
    out: *mut *mut NdsMatrix,
) -> NdsStatus {
    guard(|| {
        let data = &deref(series, "series")?.0;
        let ts = TimeSeries::from_data(data.clone())?;
        let s = if observed.is_null() {
            ObservedSet::full(data.ncols())
        } else {
            ObservedSet::new(std::slice::from_raw_parts(observed, n_observed).to_vec(), data.ncols())?
        };
        let obs = simulate::observe(&ts, &s)?;
        let est = match Method::from(method) {
            Method::Granger => estimators::granger(&obs, n)?,
            Method::OneLag => estimators::one_lag(&obs, n)?,
            Method::Nig => estimators::nig(&obs, n)?,
            Method::Precision => estimators::precision(&obs, n)?,
        };
        put(out, NdsMatrix(est.values))
    })
}

// ---- consistency ----

/// Fills `out` with the sufficient-condition check for `(a, sigma)`.
#[no_mangle]
pub unsafe extern "C" fn nds_check(
    a: *const NdsInteraction,
    sigma: *const NdsCovariance,
    out: *mut NdsReport,
) -> NdsStatus {
    guard(|| {
        let r = theory::check_theorem2(&deref(a, "interaction")?.0, &deref(sigma, "covariance")?.0)?;
        if out.is_null() {
            return Err(Fail::Null("output"));
        }
        *out = NdsReport {
            certified: i32::from(r.certified()),
            lhs: r.thm2_lhs,
            rhs: r.thm2_rhs,
            margin: r.thm2_margin,
            min_intervention: r.min_intervention,
            a_plus_min: r.a_plus_min,
            rho: r.rho,
            has_threshold: i32::from(r.threshold.is_some()),
            threshold: r.threshold.map_or(f64::NAN, |t| t.tau),
            threshold_gap: r.threshold.map_or(f64::NAN, |t| t.gap),
        };
        Ok(())
    })
}

/// Smallest intervention variance after which the sufficient condition holds.
#[no_mangle]
pub unsafe extern "C" fn nds_min_intervention(
    a: *const NdsInteraction,
    sigma: *const NdsCovariance,
    out: *mut f64,
) -> NdsStatus {
    guard(|| {
        let v = theory::min_intervention(&deref(a, "interaction")?.0, &deref(sigma, "covariance")?.0)?;
        if out.is_null() {
            return Err(Fail::Null("output"));
        }
        *out = v;
        Ok(())
    })
}

/// Covariance of `x + xi` for an isotropic intervention of the given variance.
#[no_mangle]
pub unsafe extern "C" fn nds_covariance_intervene(
    c: *const NdsCovariance,
    variance: f64,
    out: *mut *mut NdsCovariance,
) -> NdsStatus {
    guard(|| {
        let c = &deref(c, "covariance")?.0;
        put(out, NdsCovariance(c.with_intervention(&InterventionSpec::new(variance)?)?))
    })
}
