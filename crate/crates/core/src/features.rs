//! Per-pair feature vectors built from observed lag moments.
//!
//! `F_ij = ([R_D]_ij, ..., [R_M]_ij)`, `T_ij = ([[R_0]_S^-1]_ij, ...,
//! [[R_M]_S^-1]_ij)` and `K_ij = (F_ij, T_ij)`, one row per ordered pair
//! of distinct observed nodes.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::ObservedSet;
use crate::linalg;
use crate::moments::{self, LagMoments};
use crate::simulate::ObservedTimeSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    F,
    T,
    K,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::F, FeatureKind::T, FeatureKind::K];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::F => "f",
            FeatureKind::T => "t",
            FeatureKind::K => "k",
        }
    }

    pub fn dim(self, p: FeatureParams) -> usize {
        let f = p.m - p.d + 1;
        let t = p.m + 1;
        match self {
            FeatureKind::F => f,
            FeatureKind::T => t,
            FeatureKind::K => f + t,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" => Ok(FeatureKind::F),
            "t" => Ok(FeatureKind::T),
            "k" => Ok(FeatureKind::K),
            _ => Err(Error::Parameter(format!("unknown feature kind {s:?}"))),
        }
    }
}

/// Lag window: `F` uses lags `d..=m`, `T` uses `0..=m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub d: usize,
    pub m: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { d: 1, m: 4 }
    }
}

impl FeatureParams {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        let p = Self { d, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d > 1 || self.m < 3 {
            return Err(Error::Parameter(format!(
                "lag window needs d <= 1 and m >= 3, got d = {}, m = {}",
                self.d, self.m
            )));
        }
        Ok(())
    }
}

/// Feature rows for every ordered observed pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    /// Local positions `(i, j)` within the observed set, `i != j`.
    pub pairs: Vec<(usize, usize)>,
    /// One row per pair.
    pub values: DMatrix<f64>,
    pub labels: Option<Vec<bool>>,
    pub observed: ObservedSet,
}

/// Ordered off-diagonal pairs of `0..n` in row-major order.
pub fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

impl FeatureSet {
    fn from_mats(mats: &[DMatrix<f64>], observed: &ObservedSet) -> Self {
        let n = observed.len();
        let pairs = ordered_pairs(n);
        let values = DMatrix::from_fn(pairs.len(), mats.len(), |r, c| {
            let (i, j) = pairs[r];
            mats[c][(i, j)]
        });
        Self { pairs, values, labels: None, observed: observed.clone() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Attaches labels `1{A_ij != 0}` read from a support matrix over the
    /// observed nodes (local indexing).
    pub fn with_labels(mut self, support: &DMatrix<f64>) -> Result<Self> {
        let n = self.observed.len();
        if support.shape() != (n, n) {
            return Err(Error::Parameter(format!(
                "support is {}x{} but {n} nodes are observed",
                support.nrows(),
                support.ncols()
            )));
        }
        self.labels = Some(self.pairs.iter().map(|&(i, j)| support[(i, j)] != 0.0).collect());
        Ok(self)
    }

    /// Labels as a slice; errors when the set is unlabeled.
    pub fn labels(&self) -> Result<&[bool]> {
        self.labels.as_deref().ok_or_else(|| Error::Parameter("feature set has no labels".into()))
    }

    fn with_values(&self, values: DMatrix<f64>) -> Self {
        Self { pairs: self.pairs.clone(), values, labels: self.labels.clone(), observed: self.observed.clone() }
    }

    /// `i,j,label,k_0,...` with global node indices; label is empty when
    /// unknown.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        write!(w, "i,j,label")?;
        for c in 0..self.dim() {
            write!(w, ",k_{c}")?;
        }
        writeln!(w)?;
        let idx = self.observed.indices();
        for (r, &(i, j)) in self.pairs.iter().enumerate() {
            let label = match &self.labels {
                Some(l) => u8::from(l[r]).to_string(),
                None => String::new(),
            };
            write!(w, "{},{},{}", idx[i], idx[j], label)?;
            for c in 0..self.dim() {
                write!(w, ",{}", self.values[(r, c)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_moments(m: &LagMoments, observed: &ObservedSet, max_lag: usize) -> Result<()> {
    if m.max_lag() < max_lag {
        return Err(Error::Length(format!("features need lag {max_lag} but moments stop at {}", m.max_lag())));
    }
    if m.dim() != observed.len() {
        return Err(Error::Parameter("moments do not match the observed set".into()));
    }
    if observed.len() < 2 {
        return Err(Error::Parameter("features need at least two observed nodes".into()));
    }
    Ok(())
}

/// F features from moments over the observed block.
pub fn build_f(m: &LagMoments, observed: &ObservedSet, p: FeatureParams) -> Result<FeatureSet> {
    p.validate()?;
    check_moments(m, observed, p.m)?;
    Ok(FeatureSet::from_mats(&m.mats()[p.d..=p.m], observed))
}

/// T features: entries of the inverted lag blocks `0..=m`.
pub fn build_t(m: &LagMoments, observed: &ObservedSet, p: FeatureParams) -> Result<FeatureSet> {
    p.validate()?;
    check_moments(m, observed, p.m)?;
    let inverses =
        (0..=p.m).map(|k| linalg::inverse_guarded(m.lag(k), &format!("[R_{k}]_S"))).collect::<Result<Vec<_>>>()?;
    Ok(FeatureSet::from_mats(&inverses, observed))
}

/// Column-wise concatenation of two feature sets over the same pairs.
pub fn concat_k(f: &FeatureSet, t: &FeatureSet) -> Result<FeatureSet> {
    if f.pairs != t.pairs || f.observed != t.observed {
        return Err(Error::Parameter("feature sets cover different pairs".into()));
    }
    if f.dim() == 0 || t.dim() == 0 {
        return Err(Error::Parameter("cannot concatenate an empty feature block".into()));
    }
    let mut values = DMatrix::zeros(f.len(), f.dim() + t.dim());
    values.columns_mut(0, f.dim()).copy_from(&f.values);
    values.columns_mut(f.dim(), t.dim()).copy_from(&t.values);
    Ok(f.with_values(values))
}

pub fn build(kind: FeatureKind, m: &LagMoments, observed: &ObservedSet, p: FeatureParams) -> Result<FeatureSet> {
    match kind {
        FeatureKind::F => build_f(m, observed, p),
        FeatureKind::T => build_t(m, observed, p),
        FeatureKind::K => concat_k(&build_f(m, observed, p)?, &build_t(m, observed, p)?),
    }
}

/// Builds features straight from an observed series using the first `n`
/// samples.
pub fn build_from_series(kind: FeatureKind, ts: &ObservedTimeSeries, n: usize, p: FeatureParams) -> Result<FeatureSet> {
    p.validate()?;
    let m = moments::empirical_moments(ts.data(), p.m, n)?;
    build(kind, &m, ts.observed(), p)
}

fn column_means(v: &DMatrix<f64>) -> RowDVector<f64> {
    v.row_mean()
}

/// Subtracts the centroid over all pairs.
pub fn center(fs: &FeatureSet) -> FeatureSet {
    let mean = column_means(&fs.values);
    let mut values = fs.values.clone();
    for mut row in values.row_iter_mut() {
        row -= &mean;
    }
    fs.with_values(values)
}

/// Per-coordinate affine map fitted on one population and replayable on
/// another. Coordinates with zero variance are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub input_dim: usize,
    /// Kept input coordinates, increasing.
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    /// Population (1/N) variance of each kept coordinate.
    pub var: Vec<f64>,
}

impl Scaling {
    pub fn output_dim(&self) -> usize {
        self.keep.len()
    }

    /// Applies the recorded map to raw rows.
    pub fn apply_matrix(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if values.ncols() != self.input_dim {
            return Err(Error::Parameter(format!(
                "scaling expects {} features, got {}",
                self.input_dim,
                values.ncols()
            )));
        }
        let sd: Vec<f64> = self.var.iter().map(|v| v.sqrt()).collect();
        Ok(DMatrix::from_fn(values.nrows(), self.keep.len(), |r, c| (values[(r, self.keep[c])] - self.mean[c]) / sd[c]))
    }

    pub fn apply(&self, fs: &FeatureSet) -> Result<FeatureSet> {
        Ok(fs.with_values(self.apply_matrix(&fs.values)?))
    }
}

/// Fits a [`Scaling`] on the rows of `values`.
pub fn fit_scaling(values: &DMatrix<f64>) -> Result<Scaling> {
    let n = values.nrows();
    if n == 0 {
        return Err(Error::Parameter("cannot scale an empty feature set".into()));
    }
    let mut keep = Vec::new();
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for c in 0..values.ncols() {
        let col = values.column(c);
        let mu = col.sum() / n as f64;
        let v = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
        let spread = col.iter().fold(0.0_f64, |a, x| a.max((x - mu).abs()));
        if !(v > 0.0) || spread <= 1e-14 * mu.abs() {
            log::warn!("feature coordinate {c} has zero variance; dropped");
            continue;
        }
        keep.push(c);
        mean.push(mu);
        var.push(v);
    }
    if keep.is_empty() {
        return Err(Error::Degenerate("every feature coordinate is constant".into()));
    }
    Ok(Scaling { input_dim: values.ncols(), keep, mean, var })
}

/// Mean 0, variance 1 per coordinate across the pair population.
pub fn standard_scale(fs: &FeatureSet) -> Result<(FeatureSet, Scaling)> {
    let s = fit_scaling(&fs.values)?;
    Ok((s.apply(fs)?, s))
}
