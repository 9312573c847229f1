//! Colored-noise covariances, their gap/offset/residual decomposition and
//! Gaussian sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Rng};

/// Relative tolerance on the constant-diagonal check.
pub const DIAGONAL_TOL: f64 = 1e-9;
/// Smallest eigenvalue accepted, relative to the diagonal.
pub const PSD_TOL: f64 = 1e-10;

/// `Sigma = sigma2_gap * I + beta * 11^T + residual`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub sigma2_gap: f64,
    pub beta: f64,
    pub residual: DMatrix<f64>,
}

/// Splits a covariance with constant diagonal into the gap between the
/// diagonal and the largest cross-covariance, the mean cross-covariance,
/// and what is left.
pub fn decompose_covariance(sigma: &DMatrix<f64>) -> Result<Decomposition> {
    let n = sigma.nrows();
    if !sigma.is_square() || n < 2 {
        return Err(Error::Parameter(format!(
            "covariance must be square with n >= 2, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let scale = linalg::max_abs(sigma).max(f64::MIN_POSITIVE);
    if !linalg::is_symmetric(sigma, 1e-12 * scale) {
        return Err(Error::Parameter("covariance is not symmetric".into()));
    }
    let sigma2 = sigma[(0, 0)];
    for i in 1..n {
        if (sigma[(i, i)] - sigma2).abs() > DIAGONAL_TOL * sigma2.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Assumption {
                assumption: "nodewise homogeneity",
                detail: format!("diagonal entry {i} is {} but entry 0 is {sigma2}", sigma[(i, i)]),
            });
        }
    }
    let off = linalg::off_diagonal(sigma);
    let max_off = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sigma2_gap = sigma2 - max_off;
    if !(sigma2_gap > 0.0) {
        return Err(Error::Assumption {
            assumption: "pairwise distinguishability",
            detail: format!("largest cross-covariance {max_off} reaches the variance {sigma2}"),
        });
    }
    let beta = off.iter().sum::<f64>() / (n * (n - 1)) as f64;
    let residual = DMatrix::from_fn(n, n, |i, j| {
        let gap = if i == j { sigma2_gap } else { 0.0 };
        sigma[(i, j)] - gap - beta
    });
    Ok(Decomposition { sigma2_gap, beta, residual })
}

/// A validated noise covariance together with its decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpec {
    sigma: DMatrix<f64>,
    sigma2: f64,
    decomposition: Decomposition,
}

impl CovarianceSpec {
    /// Validates symmetry, constant diagonal, a positive gap and PSD.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        let decomposition = decompose_covariance(&sigma)?;
        let sigma2 = sigma[(0, 0)];
        let min_eig = sigma.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -PSD_TOL * sigma2.abs() {
            return Err(Error::Construction(format!(
                "covariance is not PSD (smallest eigenvalue {min_eig:.3e}); \
                 reduce the oscillation or the offset"
            )));
        }
        Ok(Self { sigma, sigma2, decomposition })
    }

    /// `sigma2_gap * I + beta * 11^T`, the flat case with zero residual.
    pub fn flat(n: usize, sigma2_gap: f64, beta: f64) -> Result<Self> {
        let sigma = DMatrix::from_fn(n, n, |i, j| if i == j { sigma2_gap + beta } else { beta });
        Self::from_matrix(sigma)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma2_gap(&self) -> f64 {
        self.decomposition.sigma2_gap
    }

    pub fn beta(&self) -> f64 {
        self.decomposition.beta
    }

    pub fn residual(&self) -> &DMatrix<f64> {
        &self.decomposition.residual
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    /// Max minus min over the off-diagonal entries.
    pub fn off_diagonal_osc(&self) -> f64 {
        let off = linalg::off_diagonal(&self.sigma);
        let (lo, hi) = off.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Covariance seen by the dynamics once an independent isotropic
    /// intervention is added: `Sigma + var * I`.
    pub fn with_intervention(&self, intervention: &InterventionSpec) -> Result<Self> {
        let n = self.n();
        Self::from_matrix(&self.sigma + DMatrix::identity(n, n) * intervention.variance())
    }

    /// Symmetric square root `F` with `F F^T = Sigma` (negative eigenvalues
    /// within the PSD tolerance are clamped to zero).
    pub fn symmetric_factor(&self) -> Result<DMatrix<f64>> {
        let eig = self.sigma.clone().symmetric_eigen();
        if eig.eigenvalues.min() < -PSD_TOL * self.sigma2.abs() {
            return Err(Error::Construction("covariance is not PSD".into()));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let q = &eig.eigenvectors;
        let mut scaled = q.clone();
        for (j, r) in roots.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*r);
        }
        Ok(&scaled * q.transpose())
    }
}

/// Builds a covariance with diagonal `sigma2`, off-diagonal mean exactly
/// `beta`, and off-diagonal spread at most `osc`.
///
/// Off-diagonal perturbations are uniform in `[-osc/2, osc/2]`, symmetric,
/// and recentered to zero mean.
pub fn build_covariance(n: usize, sigma2: f64, beta: f64, osc: f64, seed: u64) -> Result<CovarianceSpec> {
    if n < 2 {
        return Err(Error::Parameter(format!("dimension {n} < 2")));
    }
    if !(osc >= 0.0) || !(beta + osc / 2.0 >= 0.0) || !(sigma2 > beta + osc / 2.0) {
        return Err(Error::Parameter(format!(
            "need sigma2 > beta + osc/2 >= 0, got sigma2={sigma2}, beta={beta}, osc={osc}"
        )));
    }
    let mut rng = rng::rng(seed);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let mut u: Vec<f64> =
        pairs.iter().map(|_| if osc > 0.0 { rng.random_range(-osc / 2.0..=osc / 2.0) } else { 0.0 }).collect();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    let mut sigma = DMatrix::from_element(n, n, 0.0);
    for (&(i, j), &d) in pairs.iter().zip(&u) {
        sigma[(i, j)] = beta + d;
        sigma[(j, i)] = beta + d;
    }
    for i in 0..n {
        sigma[(i, i)] = sigma2;
    }
    let spec = CovarianceSpec::from_matrix(sigma)?;
    Ok(spec)
}

/// Isotropic exogenous intervention `xi(n) ~ N(0, variance * I)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct InterventionSpec {
    variance: f64,
}

impl InterventionSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::Parameter(format!("intervention variance {variance} must be finite and >= 0")));
        }
        Ok(Self { variance })
    }

    pub fn none() -> Self {
        Self { variance: 0.0 }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Streaming draws of `x ~ N(0, Sigma)`.
pub struct NoiseSampler {
    factor: DMatrix<f64>,
    z: DVector<f64>,
    rng: Rng,
}

impl NoiseSampler {
    pub fn new(spec: &CovarianceSpec, seed: u64) -> Result<Self> {
        Ok(Self { factor: spec.symmetric_factor()?, z: DVector::zeros(spec.n()), rng: rng::rng(seed) })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Writes the next draw into `out`.
    pub fn fill(&mut self, out: &mut DVector<f64>) {
        for v in self.z.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
        self.factor.mul_to(&self.z, out);
    }
}

/// Isotropic Gaussian stream for interventions.
pub struct InterventionSampler {
    std: f64,
    rng: Rng,
}

impl InterventionSampler {
    pub fn new(intervention: &InterventionSpec, seed: u64) -> Self {
        Self { std: intervention.variance().sqrt(), rng: rng::rng(seed) }
    }

    pub fn is_active(&self) -> bool {
        self.std > 0.0
    }

    pub fn add_to(&mut self, out: &mut DVector<f64>) {
        if self.std == 0.0 {
            return;
        }
        for v in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *v += self.std * z;
        }
    }
}

/// `length` i.i.d. draws, one per row.
pub fn sample_noise(spec: &CovarianceSpec, length: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut sampler = NoiseSampler::new(spec, seed)?;
    let n = spec.n();
    let mut out = DMatrix::zeros(length, n);
    let mut x = DVector::zeros(n);
    for t in 0..length {
        sampler.fill(&mut x);
        out.row_mut(t).copy_from(&x.transpose());
    }
    Ok(out)
}

/// Adds i.i.d. `N(0, variance)` to every entry of a noise series.
pub fn add_intervention(noise: &DMatrix<f64>, intervention: &InterventionSpec, seed: u64) -> DMatrix<f64> {
    let mut sampler = InterventionSampler::new(intervention, seed);
    let mut out = noise.clone();
    if !sampler.is_active() {
        return out;
    }
    let mut row = DVector::zeros(noise.ncols());
    for t in 0..noise.nrows() {
        row.copy_from(&noise.row(t).transpose());
        sampler.add_to(&mut row);
        out.row_mut(t).copy_from(&row.transpose());
    }
    out
}
