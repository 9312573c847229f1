//! Dense matrix helpers shared by every module: the matrix text format,
//! condition-guarded inversion, block extraction and spectral radius.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest condition number accepted by [`inverse_guarded`].
pub const MAX_CONDITION: f64 = 1e12;

/// Inverts `m` through its SVD, refusing matrices whose condition number
/// exceeds [`MAX_CONDITION`]. `what` names the matrix in the error message.
pub fn inverse_guarded(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Parameter(format!("{what}: cannot invert a {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning(format!("{what}: non-finite entries")));
    }
    let svd = m.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    if s_min <= 0.0 || !(s_max / s_min <= MAX_CONDITION) {
        return Err(Error::Conditioning(format!(
            "{what}: condition number {:.3e} exceeds {:.0e}",
            s_max / s_min,
            MAX_CONDITION
        )));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut v = v_t.transpose();
    for (j, sv) in s.iter().enumerate() {
        v.column_mut(j).scale_mut(1.0 / sv);
    }
    Ok(v * u.transpose())
}

/// Entries `m[rows[a], cols[b]]`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    submatrix(m, idx, idx)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Off-diagonal entries in row-major order, `(i, j)` and `(j, i)` distinct.
pub fn off_diagonal(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..m.ncols() {
            if i != j {
                out.push(m[(i, j)]);
            }
        }
    }
    out
}

pub fn row_sums(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.sum()).collect()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Perron root of a nonnegative matrix by power iteration on `m + I`.
///
/// The shift makes the iteration aperiodic (bipartite supports would
/// otherwise oscillate) and moves the Perron root by exactly one.
pub fn perron_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Parameter("spectral radius of a non-square matrix".into()));
    }
    if m.iter().any(|&v| v < 0.0) {
        return Err(Error::Parameter("power iteration requires a nonnegative matrix".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let shifted = m + DMatrix::<f64>::identity(n, n);
    let mut x = nalgebra::DVector::from_element(n, 1.0);
    let mut estimate = f64::NAN;
    for _ in 0..100_000 {
        let y = &shifted * &x;
        let norm = y.amax();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm / x.amax();
        x = y / norm;
        if (next - estimate).abs() <= 1e-15 * next {
            return Ok(next - 1.0);
        }
        estimate = next;
    }
    Ok(estimate - 1.0)
}

/// Largest eigenvalue modulus of an arbitrary real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Parameter("spectral radius of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = m
        .clone()
        .try_schur(1e-14, 100_000)
        .ok_or_else(|| Error::Stability("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Parses the matrix text format: a `rows cols` header line followed by
/// `rows` lines of whitespace-separated decimal numbers.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad header {header:?}: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Format(format!("header must be `rows cols`, got {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines.next().ok_or_else(|| Error::Format(format!("expected {rows} rows, found {r}")))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|e| Error::Format(format!("row {r}: bad number {tok:?}: {e}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Format(format!("row {r}: expected {cols} values, found {}", data.len() - before)));
        }
    }
    if lines.next().is_some() {
        return Err(Error::Format(format!("more than {rows} rows")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guarded_inverse_matches_known_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 7.0, 2.0, 6.0]);
        let inv = inverse_guarded(&m, "m").unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.6, -0.7, -0.2, 0.4]);
        assert!((inv - expected).amax() < 1e-14);
    }

    #[test]
    fn guarded_inverse_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(inverse_guarded(&m, "m"), Err(Error::Conditioning(_))));
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(inverse_guarded(&z, "z"), Err(Error::Conditioning(_))));
    }

    #[test]
    fn perron_radius_of_bipartite_support() {
        // zero diagonal, period two: plain power iteration would not settle
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!((perron_radius(&m).unwrap() - 0.5).abs() < 1e-12);
        assert!((spectral_radius(&m).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((spectral_radius(&m).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn matrix_text_roundtrip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-17, 3.0, 1.0 / 3.0, 0.0, 7e300]);
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_text_rejects_malformed() {
        assert!(matches!(parse_matrix(""), Err(Error::Format(_))));
        assert!(matches!(parse_matrix("2 2\n1 2\n"), Err(Error::Format(_))));
        assert!(matches!(parse_matrix("2 2\n1 2\n3\n"), Err(Error::Format(_))));
        assert!(matches!(parse_matrix("1 1\nx\n"), Err(Error::Format(_))));
        assert!(matches!(parse_matrix("2\n1\n"), Err(Error::Format(_))));
    }
}
