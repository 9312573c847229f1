//! Empirical lag covariances `R_k(n) = (1/n) sum_{l<n} y(l+k) y(l)^T` and
//! their stationary limits `R_0 = sum_i A^i Sigma (A^T)^i`, `R_k = A^k R_0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative truncation tolerance for the stationary series.
pub const TOL_SERIES: f64 = 1e-12;
const MAX_SERIES_TERMS: usize = 1_000_000;
/// Outer products are summed plainly inside a block, then folded into a
/// compensated total.
const BLOCK: usize = 256;

/// Lag covariances `k = 0..=max_lag` over a common sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct LagMoments {
    mats: Vec<DMatrix<f64>>,
    n_samples: usize,
}

impl LagMoments {
    pub fn new(mats: Vec<DMatrix<f64>>, n_samples: usize) -> Result<Self> {
        let Some(first) = mats.first() else {
            return Err(Error::Parameter("no lag matrices".into()));
        };
        let d = first.nrows();
        if mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::Parameter("lag matrices must share a square shape".into()));
        }
        Ok(Self { mats, n_samples })
    }

    pub fn max_lag(&self) -> usize {
        self.mats.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    /// Number of lag terms averaged; 0 for analytic limits.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn lag(&self, k: usize) -> &DMatrix<f64> {
        &self.mats[k]
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// The `[R_k]_S` blocks for an index subset.
    pub fn restrict(&self, idx: &[usize]) -> LagMoments {
        LagMoments {
            mats: self.mats.iter().map(|m| linalg::principal_submatrix(m, idx)).collect(),
            n_samples: self.n_samples,
        }
    }

    /// Multiplies every matrix by `c` (moments of a series scaled by `sqrt(c)`).
    pub fn scaled(&self, c: f64) -> LagMoments {
        LagMoments { mats: self.mats.iter().map(|m| m * c).collect(), n_samples: self.n_samples }
    }
}

/// Neumaier-compensated running sum of `d x d` blocks.
#[derive(Clone, Debug)]
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    fn add(&mut self, block: &[f64]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(block) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    fn total(&self) -> impl Iterator<Item = f64> + '_ {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c)
    }
}

/// Sum of outer products `u v^T` in row-major layout.
#[derive(Clone, Debug)]
struct OuterAccumulator {
    d: usize,
    block: Vec<f64>,
    in_block: usize,
    total: CompensatedSum,
    count: usize,
}

impl OuterAccumulator {
    fn new(d: usize) -> Self {
        Self { d, block: vec![0.0; d * d], in_block: 0, total: CompensatedSum::new(d * d), count: 0 }
    }

    #[inline]
    fn push(&mut self, u: &[f64], v: &[f64]) {
        let d = self.d;
        for (i, &ui) in u.iter().enumerate() {
            let row = &mut self.block[i * d..(i + 1) * d];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += ui * vj;
            }
        }
        self.in_block += 1;
        self.count += 1;
        if self.in_block == BLOCK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.in_block > 0 {
            self.total.add(&self.block);
            self.block.iter_mut().for_each(|v| *v = 0.0);
            self.in_block = 0;
        }
    }

    fn mean(&mut self) -> DMatrix<f64> {
        self.flush();
        let n = self.count as f64;
        let vals: Vec<f64> = self.total.total().map(|v| v / n).collect();
        DMatrix::from_row_slice(self.d, self.d, &vals)
    }
}

fn rows_of(data: &DMatrix<f64>, count: usize) -> Vec<f64> {
    // row-major copy of the first `count` samples
    let d = data.ncols();
    let mut out = Vec::with_capacity(count * d);
    for t in 0..count {
        out.extend(data.row(t).iter());
    }
    out
}

/// `(1/n) sum_{l=0}^{n-1} y(l+k) y(l)^T` for a series stored one sample per row.
pub fn empirical_lag_cov(data: &DMatrix<f64>, k: usize, n: usize) -> Result<DMatrix<f64>> {
    check_length(data.nrows(), k, n)?;
    let d = data.ncols();
    let rows = rows_of(data, n + k);
    let mut acc = OuterAccumulator::new(d);
    for l in 0..n {
        acc.push(&rows[(l + k) * d..(l + k + 1) * d], &rows[l * d..(l + 1) * d]);
    }
    Ok(acc.mean())
}

/// All lags `0..=max_lag` at sample count `n`.
pub fn empirical_moments(data: &DMatrix<f64>, max_lag: usize, n: usize) -> Result<LagMoments> {
    check_length(data.nrows(), max_lag, n)?;
    let mut stream = StreamingMoments::new(data.ncols(), max_lag, vec![n])?;
    let d = data.ncols();
    let rows = rows_of(data, n + max_lag);
    for t in 0..n + max_lag {
        stream.push(&rows[t * d..(t + 1) * d]);
    }
    stream.into_checkpoints().map(|mut v| v.remove(0))
}

fn check_length(len: usize, k: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Length("need at least one sample".into()));
    }
    if len < n + k {
        return Err(Error::Length(format!("lag {k} at n = {n} needs {} samples, series has {len}", n + k)));
    }
    Ok(())
}

/// Lag covariances accumulated one sample at a time, snapshotted at a list
/// of sample counts so a single pass yields accuracy-versus-n curves.
///
/// A snapshot at `n` for lag `k` is taken once `n + k` samples have arrived.
#[derive(Clone, Debug)]
pub struct StreamingMoments {
    d: usize,
    max_lag: usize,
    checkpoints: Vec<usize>,
    history: Vec<f64>,
    seen: usize,
    acc: Vec<OuterAccumulator>,
    next_checkpoint: Vec<usize>,
    snapshots: Vec<Vec<Option<DMatrix<f64>>>>,
}

impl StreamingMoments {
    pub fn new(d: usize, max_lag: usize, checkpoints: Vec<usize>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("checkpoints must be positive and strictly increasing".into()));
        }
        let n_cp = checkpoints.len();
        Ok(Self {
            d,
            max_lag,
            checkpoints,
            history: vec![0.0; (max_lag + 1) * d],
            seen: 0,
            acc: (0..=max_lag).map(|_| OuterAccumulator::new(d)).collect(),
            next_checkpoint: vec![0; max_lag + 1],
            snapshots: vec![vec![None; max_lag + 1]; n_cp],
        })
    }

    /// Samples needed before every checkpoint is complete.
    pub fn required_samples(&self) -> usize {
        self.checkpoints.last().copied().unwrap_or(0) + self.max_lag
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn push(&mut self, y: &[f64]) {
        debug_assert_eq!(y.len(), self.d);
        let d = self.d;
        let slots = self.max_lag + 1;
        let t = self.seen;
        let slot = t % slots;
        self.history[slot * d..(slot + 1) * d].copy_from_slice(y);
        for k in 0..=self.max_lag.min(t) {
            let c = self.next_checkpoint[k];
            if c >= self.checkpoints.len() {
                continue;
            }
            let past = (t - k) % slots;
            let (cur, old) = (slot * d, past * d);
            // split borrow: the history is read-only here
            let hist = &self.history;
            self.acc[k].push(&hist[cur..cur + d], &hist[old..old + d]);
            if self.acc[k].count == self.checkpoints[c] {
                self.snapshots[c][k] = Some(self.acc[k].mean());
                self.next_checkpoint[k] += 1;
            }
        }
        self.seen += 1;
    }

    pub fn push_vector(&mut self, y: &DVector<f64>) {
        self.push(y.as_slice());
    }

    /// One [`LagMoments`] per checkpoint; fails if the stream was too short.
    pub fn into_checkpoints(self) -> Result<Vec<LagMoments>> {
        let need = self.required_samples();
        let seen = self.seen;
        self.snapshots
            .into_iter()
            .zip(self.checkpoints)
            .map(|(mats, n)| {
                let mats: Option<Vec<_>> = mats.into_iter().collect();
                let mats = mats.ok_or_else(|| Error::Length(format!("stream ended after {seen} of {need} samples")))?;
                LagMoments::new(mats, n)
            })
            .collect()
    }
}

/// Stationary covariance `sum_i A^i Sigma (A^T)^i`, truncated once a term's
/// largest entry drops below [`TOL_SERIES`] times the running sum's.
pub fn limit_r0(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    stationary_series(a, sigma)
}

/// `sum_i A^i X (A^T)^i` for any `X`, with the same truncation rule.
pub fn stationary_series(a: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    transformed_series(a, x, false)
}

/// `sum_i A^i X A^i` (no transpose on the right), as written for symmetric `A`.
pub fn plain_series(a: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    transformed_series(a, x, true)
}

fn transformed_series(a: &DMatrix<f64>, x: &DMatrix<f64>, plain: bool) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || x.shape() != (n, n) {
        return Err(Error::Parameter("series operands must be square and equal size".into()));
    }
    let radius = linalg::spectral_radius(a)?;
    if !(radius < 1.0) {
        return Err(Error::Stability(format!("spectral radius {radius} >= 1")));
    }
    let a_right = if plain { a.clone() } else { a.transpose() };
    let mut term = x.clone();
    let mut sum = x.clone();
    let mut scratch = DMatrix::zeros(n, n);
    for _ in 0..MAX_SERIES_TERMS {
        a.mul_to(&term, &mut scratch);
        scratch.mul_to(&a_right, &mut term);
        sum += &term;
        let t = linalg::max_abs(&term);
        if !t.is_finite() {
            return Err(Error::Stability("stationary series diverged".into()));
        }
        if t <= TOL_SERIES * linalg::max_abs(&sum) {
            return Ok(sum);
        }
    }
    Err(Error::Stability(format!("stationary series did not converge in {MAX_SERIES_TERMS} terms")))
}

/// `A^k R_0`.
pub fn limit_rk(a: &DMatrix<f64>, r0: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = r0.clone();
    for _ in 0..k {
        out = a * out;
    }
    out
}

/// Analytic `R_0 .. R_max_lag`.
pub fn limit_moments(a: &DMatrix<f64>, sigma: &DMatrix<f64>, max_lag: usize) -> Result<LagMoments> {
    let r0 = limit_r0(a, sigma)?;
    let mut mats = Vec::with_capacity(max_lag + 1);
    mats.push(r0);
    for k in 1..=max_lag {
        let next = a * &mats[k - 1];
        mats.push(next);
    }
    LagMoments::new(mats, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::InteractionMatrix;
    use crate::noise::{CovarianceSpec, InterventionSpec};
    use crate::simulate::simulate;

    fn two_node() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.2, 0.4, 0.4, 0.2])
    }

    fn naive_lag_cov(data: &DMatrix<f64>, k: usize, n: usize) -> DMatrix<f64> {
        let d = data.ncols();
        let mut m = DMatrix::zeros(d, d);
        for l in 0..n {
            m += data.row(l + k).transpose() * data.row(l);
        }
        m / n as f64
    }

    #[test]
    fn constant_series_gives_outer_product() {
        let v = [1.5, -2.0, 0.25];
        let data = DMatrix::from_fn(40, 3, |_, j| v[j]);
        let vv = DMatrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        for k in 0..4 {
            assert!((empirical_lag_cov(&data, k, 30).unwrap() - &vv).amax() < 1e-14);
        }
    }

    #[test]
    fn single_sample() {
        let data = DMatrix::from_row_slice(1, 2, &[3.0, -1.0]);
        let r = empirical_lag_cov(&data, 0, 1).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[9.0, -3.0, -3.0, 1.0]));
    }

    #[test]
    fn insufficient_samples() {
        let data = DMatrix::zeros(10, 2);
        assert!(matches!(empirical_lag_cov(&data, 3, 8), Err(Error::Length(_))));
        assert!(matches!(empirical_lag_cov(&data, 0, 0), Err(Error::Length(_))));
        assert!(empirical_lag_cov(&data, 2, 8).is_ok());
    }

    #[test]
    fn white_noise_r0_is_identity() {
        let s = CovarianceSpec::identity(3).unwrap();
        let x = crate::noise::sample_noise(&s, 100_000, 77).unwrap();
        let r0 = empirical_lag_cov(&x, 0, 100_000).unwrap();
        for i in 0..3 {
            assert!((r0[(i, i)] - 1.0).abs() < 0.05);
            for j in 0..3 {
                if i != j {
                    assert!(r0[(i, j)].abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn streaming_matches_naive() {
        let s = CovarianceSpec::identity(3).unwrap();
        let x = crate::noise::sample_noise(&s, 3000, 1).unwrap();
        let mut st = StreamingMoments::new(3, 3, vec![10, 700, 2997]).unwrap();
        assert_eq!(st.required_samples(), 3000);
        for t in 0..3000 {
            let row: Vec<f64> = x.row(t).iter().copied().collect();
            st.push(&row);
        }
        let snaps = st.into_checkpoints().unwrap();
        for (snap, n) in snaps.iter().zip([10, 700, 2997]) {
            assert_eq!(snap.n_samples(), n);
            for k in 0..=3 {
                let want = naive_lag_cov(&x, k, n);
                assert!((snap.lag(k) - &want).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn streaming_reports_short_stream() {
        let mut st = StreamingMoments::new(1, 2, vec![5]).unwrap();
        for _ in 0..6 {
            st.push(&[1.0]);
        }
        assert!(matches!(st.into_checkpoints(), Err(Error::Length(_))));
        assert!(StreamingMoments::new(1, 1, vec![5, 5]).is_err());
        assert!(StreamingMoments::new(1, 1, vec![]).is_err());
    }

    #[test]
    fn compensated_sum_beats_naive_cancellation() {
        let mut c = CompensatedSum::new(1);
        c.add(&[1e16]);
        for _ in 0..1000 {
            c.add(&[1.0]);
        }
        c.add(&[-1e16]);
        assert_eq!(c.total().next().unwrap(), 1000.0);
    }

    #[test]
    fn r0_trivial_and_scalar() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
        assert_eq!(limit_r0(&DMatrix::zeros(2, 2), &sigma).unwrap(), sigma);
        let a = DMatrix::from_element(1, 1, 0.5);
        let r0 = limit_r0(&a, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((r0[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        let r1 = limit_rk(&a, &r0, 1);
        assert!((r1[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(limit_rk(&a, &r0, 0), r0);
    }

    #[test]
    fn r0_satisfies_lyapunov() {
        let a = two_node();
        let sigma = DMatrix::identity(2, 2);
        let r0 = limit_r0(&a, &sigma).unwrap();
        let residual = &r0 - &a * &r0 * a.transpose() - &sigma;
        assert!(residual.amax() < 1e-10);
        assert!(linalg::is_symmetric(&r0, 1e-12));
    }

    #[test]
    fn r0_linear_in_sigma() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.3, 0.2, 0.0, 0.5, 0.1, 0.2, 0.2, 0.2]);
        let s1 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 2.0, 0.4, 0.1, 0.4, 2.0]);
        let s2 = DMatrix::from_row_slice(3, 3, &[1.0, -0.2, 0.0, -0.2, 1.0, 0.1, 0.0, 0.1, 1.0]);
        let sum = limit_r0(&a, &(&s1 + &s2)).unwrap();
        let parts = limit_r0(&a, &s1).unwrap() + limit_r0(&a, &s2).unwrap();
        assert!((sum - parts).amax() < 2.0 * TOL_SERIES * 10.0);
    }

    #[test]
    fn r0_rejects_unstable() {
        let a = DMatrix::from_element(1, 1, 1.2);
        assert!(matches!(limit_r0(&a, &DMatrix::from_element(1, 1, 1.0)), Err(Error::Stability(_))));
    }

    #[test]
    fn empirical_r1_matches_limit() {
        let a = InteractionMatrix::from_matrix(two_node()).unwrap();
        let s = CovarianceSpec::identity(2).unwrap();
        let ts = simulate(&a, &s, &InterventionSpec::none(), 200_001, 50, 5).unwrap();
        let r1 = empirical_lag_cov(ts.data(), 1, 200_000).unwrap();
        let r0 = limit_r0(a.matrix(), s.matrix()).unwrap();
        let want = limit_rk(a.matrix(), &r0, 1);
        for (got, w) in r1.iter().zip(want.iter()) {
            assert!((got - w).abs() / w.abs() < 0.05, "{got} vs {w}");
        }
    }

    #[test]
    fn error_shrinks_with_samples() {
        // median over seeds of max-abs error at n = 1e3, 1e4, 1e5
        let a = InteractionMatrix::from_matrix(two_node()).unwrap();
        let s = CovarianceSpec::identity(2).unwrap();
        let lim = limit_moments(a.matrix(), s.matrix(), 1).unwrap();
        let cps = [1_000usize, 10_000, 100_000];
        let mut errs = vec![Vec::new(); 3];
        for seed in 0..20 {
            let ts = simulate(&a, &s, &InterventionSpec::none(), 100_001, 50, seed).unwrap();
            for (c, &n) in cps.iter().enumerate() {
                let m = empirical_moments(ts.data(), 1, n).unwrap();
                let e = (0..=1).map(|k| (m.lag(k) - lim.lag(k)).amax()).fold(0.0, f64::max);
                errs[c].push(e);
            }
        }
        let med: Vec<f64> = errs
            .into_iter()
            .map(|mut v| {
                v.sort_by(f64::total_cmp);
                (v[9] + v[10]) / 2.0
            })
            .collect();
        assert!(med[0] > med[1] && med[1] > med[2], "{med:?}");
    }
}
