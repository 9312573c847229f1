//! The linear recursion `y(n+1) = A y(n) + x(n+1) [+ xi(n+1)]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphgen::{InteractionMatrix, ObservedSet};
use crate::linalg;
use crate::noise::{CovarianceSpec, InterventionSampler, InterventionSpec, NoiseSampler};
use crate::rng::{self, stream};

/// `10 * ceil(1 / (1 - rho))` steps.
pub fn default_burn_in(rho: f64) -> usize {
    // the 1e-9 slack keeps 1/(1 - 0.9) = 10.000000000000002 from rounding up
    10 * (1.0 / (1.0 - rho) - 1e-9).ceil() as usize
}

/// Node states over time, one row per retained sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    data: DMatrix<f64>,
    seed: u64,
    burn_in: usize,
}

impl TimeSeries {
    pub fn from_data(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Length("time series must be non-empty".into()));
        }
        Ok(Self { data, seed: 0, burn_in: 0 })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn n_nodes(&self) -> usize {
        self.data.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }
}

/// The columns of a [`TimeSeries`] belonging to an observed subset.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedTimeSeries {
    data: DMatrix<f64>,
    observed: ObservedSet,
}

impl ObservedTimeSeries {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn observed(&self) -> &ObservedSet {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

pub fn observe(ts: &TimeSeries, s: &ObservedSet) -> Result<ObservedTimeSeries> {
    if s.is_empty() {
        return Err(Error::Parameter("observed set is empty".into()));
    }
    if s.n_total() != ts.n_nodes() {
        return Err(Error::Parameter(format!(
            "observed set is over {} nodes but the series has {}",
            s.n_total(),
            ts.n_nodes()
        )));
    }
    let data = ts.data.select_columns(s.indices());
    Ok(ObservedTimeSeries { data, observed: s.clone() })
}

/// Runs the recursion, handing each retained state to a sink. Useful when
/// the series is consumed on the fly (streaming moments) rather than kept.
pub struct Simulator<'a> {
    a: &'a DMatrix<f64>,
    noise: NoiseSampler,
    intervention: InterventionSampler,
    burn_in: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(
        a: &'a DMatrix<f64>,
        noise: &CovarianceSpec,
        intervention: &InterventionSpec,
        burn_in: usize,
        seed: u64,
    ) -> Result<Self> {
        if !a.is_square() || a.nrows() != noise.n() {
            return Err(Error::Parameter(format!(
                "interaction matrix is {}x{} but noise has dimension {}",
                a.nrows(),
                a.ncols(),
                noise.n()
            )));
        }
        let radius = linalg::spectral_radius(a)?;
        if !(radius < 1.0) {
            return Err(Error::Stability(format!("spectral radius {radius} >= 1")));
        }
        Ok(Self {
            a,
            noise: NoiseSampler::new(noise, rng::mix(seed, stream::NOISE))?,
            intervention: InterventionSampler::new(intervention, rng::mix(seed, stream::INTERVENTION)),
            burn_in,
        })
    }

    /// Iterates `burn_in + length` steps from `y(0) = 0` and passes the
    /// last `length` states to `sink`.
    pub fn run(&mut self, length: usize, mut sink: impl FnMut(&DVector<f64>)) {
        let n = self.a.nrows();
        let mut y = DVector::zeros(n);
        let mut next = DVector::zeros(n);
        let mut x = DVector::zeros(n);
        for t in 0..self.burn_in + length {
            self.noise.fill(&mut x);
            self.intervention.add_to(&mut x);
            self.a.mul_to(&y, &mut next);
            next += &x;
            std::mem::swap(&mut y, &mut next);
            if t >= self.burn_in {
                sink(&y);
            }
        }
    }
}

/// Simulates `length` retained samples after `burn_in` discarded steps.
pub fn simulate(
    a: &InteractionMatrix,
    noise: &CovarianceSpec,
    intervention: &InterventionSpec,
    length: usize,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries> {
    simulate_matrix(a.matrix(), noise, intervention, length, burn_in, seed)
}

/// As [`simulate`] for an arbitrary square matrix (checked for stability).
pub fn simulate_matrix(
    a: &DMatrix<f64>,
    noise: &CovarianceSpec,
    intervention: &InterventionSpec,
    length: usize,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries> {
    if length == 0 {
        return Err(Error::Length("length must be at least 1".into()));
    }
    let mut sim = Simulator::new(a, noise, intervention, burn_in, seed)?;
    let mut data = DMatrix::zeros(length, a.nrows());
    let mut t = 0;
    sim.run(length, |y| {
        data.row_mut(t).copy_from(&y.transpose());
        t += 1;
    });
    Ok(TimeSeries { data, seed, burn_in })
}
