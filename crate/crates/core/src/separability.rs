//! Hard-margin linear separability certificates.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::fit_scaling;

/// A hyperplane `w . x + b` in the original feature coordinates with
/// positive labels on the positive side.
#[derive(Clone, Debug, PartialEq)]
pub struct Separator {
    pub w: DVector<f64>,
    pub b: f64,
    /// `min_i y_i (w . x_i + b)`, re-evaluated on the inputs.
    pub margin: f64,
}

/// Finds a strictly separating hyperplane if one exists.
///
/// Solves `max t` subject to `y_i (w . z_i + b) >= t`, `|w|_inf <= 1`,
/// `t <= 1` on standardized rows `z_i`, maps the solution back and
/// re-checks every point. Returns `None` when the optimum is not positive.
pub fn linear_separator(x: &DMatrix<f64>, labels: &[bool]) -> Result<Option<Separator>> {
    if x.nrows() != labels.len() {
        return Err(Error::Parameter("one label per row required".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::Degenerate("separability needs both classes".into()));
    }
    let scaling = fit_scaling(x)?;
    let z = scaling.apply_matrix(x)?;
    let d = z.ncols();

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let w: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    let b = lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    for (r, &label) in labels.iter().enumerate() {
        let y = if label { 1.0 } else { -1.0 };
        let mut terms: Vec<_> = (0..d).map(|c| (w[c], y * z[(r, c)])).collect();
        terms.push((b, y));
        terms.push((t, -1.0));
        lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp.solve().map_err(|e| Error::Conditioning(format!("separability program failed: {e}")))?;
    if sol.objective() <= 1e-9 {
        return Ok(None);
    }

    // back to raw coordinates: w_raw_k = w_k / sd_k on kept columns
    let mut w_raw = DVector::zeros(x.ncols());
    let mut b_raw = *sol.var_value(b);
    for (c, &col) in scaling.keep.iter().enumerate() {
        let sd = scaling.var[c].sqrt();
        let wc = *sol.var_value(w[c]);
        w_raw[col] = wc / sd;
        b_raw -= wc * scaling.mean[c] / sd;
    }
    let margin = labels
        .iter()
        .enumerate()
        .map(|(r, &label)| {
            let y = if label { 1.0 } else { -1.0 };
            y * (x.row(r).transpose().dot(&w_raw) + b_raw)
        })
        .fold(f64::INFINITY, f64::min);
    if !(margin > 0.0) {
        return Ok(None);
    }
    Ok(Some(Separator { w: w_raw, b: b_raw, margin }))
}
