//! Small feed-forward binary classifier: softplus hidden layers, sigmoid
//! output, class-weighted cross-entropy, mini-batch momentum descent.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Scaling;
use crate::rng::{self, stream};

const FORMAT_HEADER: &str = "ndscausal-ffnn 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub class_weighting: bool,
    /// Stop once the loss moved less than this over `early_stop_window`
    /// epochs.
    pub early_stop_tol: f64,
    pub early_stop_window: usize,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            epochs: 300,
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_size: 128,
            class_weighting: true,
            early_stop_tol: 1e-7,
            early_stop_window: 10,
        }
    }
}

impl TrainingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Parameter("hidden layers must be non-empty".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter("need learning_rate > 0 and momentum in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub loss_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnnModel {
    pub layers: Vec<Layer>,
    pub meta: TrainingMeta,
    /// Scaling fitted on the training features, stored alongside the model.
    pub scaling: Option<Scaling>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln s(z) + (1-y) ln(1-s(z))]` evaluated stably from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

impl FfnnModel {
    /// Uniform Glorot initialization.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || dims[dims.len() - 1] != 1 {
            return Err(Error::Parameter(format!("invalid layer dims {dims:?}")));
        }
        let mut r = rng::rng_for(seed, stream::CLASSIFIER);
        let layers = dims
            .windows(2)
            .map(|d| {
                let bound = (6.0 / (d[0] + d[1]) as f64).sqrt();
                Layer { w: DMatrix::from_fn(d[1], d[0], |_, _| r.random_range(-bound..bound)), b: DVector::zeros(d[1]) }
            })
            .collect();
        Ok(Self { layers, meta: TrainingMeta { seed, ..Default::default() }, scaling: None })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.ncols()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            for i in 0..l.w.nrows() {
                out.extend(l.w.row(i).iter());
            }
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Parameter("parameter vector has the wrong length".into()));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for i in 0..l.w.nrows() {
                for j in 0..l.w.ncols() {
                    l.w[(i, j)] = p[k];
                    k += 1;
                }
            }
            for i in 0..l.b.len() {
                l.b[i] = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Pre-activations of every layer for a batch (rows are samples).
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &act * l.w.transpose();
            for mut row in z.row_iter_mut() {
                row += l.b.transpose();
            }
            if k + 1 < self.layers.len() {
                act = z.map(softplus);
            }
            pre.push(z);
        }
        pre
    }

    /// Output logits.
    pub fn logits(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Parameter(format!("model expects {} features, got {}", self.input_dim(), x.ncols())));
        }
        let pre = self.forward(x);
        Ok(pre[pre.len() - 1].column(0).into_owned())
    }

    /// Probabilities and 0.5-cutoff labels for already-scaled features.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<bool>)> {
        let z = self.logits(x)?;
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let labels = p.iter().map(|&v| v > 0.5).collect();
        Ok((p, labels))
    }

    /// Weighted mean loss and its gradient in [`FfnnModel::params`] order.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
        let pre = self.forward(x);
        let total_w: f64 = w.iter().sum();
        let out = &pre[pre.len() - 1];
        let mut loss = 0.0;
        let mut delta = DMatrix::zeros(x.nrows(), 1);
        for r in 0..x.nrows() {
            let z = out[(r, 0)];
            loss += w[r] * bce_from_logit(z, y[r]);
            delta[(r, 0)] = w[r] * (sigmoid(z) - y[r]) / total_w;
        }
        loss /= total_w;

        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = if k == 0 { x.clone() } else { pre[k - 1].map(softplus) };
            let gw = delta.transpose() * &input;
            let gb = delta.row_sum().transpose();
            grads.push((gw, gb));
            if k > 0 {
                let back = &delta * &self.layers[k].w;
                delta = back.component_mul(&pre[k - 1].map(sigmoid));
            }
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            for i in 0..gw.nrows() {
                flat.extend(gw.row(i).iter());
            }
            flat.extend(gb.iter());
        }
        (loss, flat)
    }

    /// Plain-text serialization; parameters are printed in shortest
    /// round-trip form so loading is bit-exact.
    pub fn to_text(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        let dims = self.dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "dims {dims}").unwrap();
        writeln!(s, "hidden_activation softplus").unwrap();
        writeln!(s, "output_activation sigmoid").unwrap();
        writeln!(s, "epochs_run {}", self.meta.epochs_run).unwrap();
        writeln!(s, "learning_rate {}", self.meta.learning_rate).unwrap();
        writeln!(s, "momentum {}", self.meta.momentum).unwrap();
        writeln!(s, "seed {}", self.meta.seed).unwrap();
        writeln!(s, "loss {}", join(&mut self.meta.loss_curve.iter().copied())).unwrap();
        for (k, l) in self.layers.iter().enumerate() {
            let row_major = (0..l.w.nrows()).flat_map(|i| (0..l.w.ncols()).map(move |j| (i, j)));
            writeln!(s, "weight{k} {}", join(&mut row_major.map(|ij| l.w[ij]))).unwrap();
            writeln!(s, "bias{k} {}", join(&mut l.b.iter().copied())).unwrap();
        }
        if let Some(sc) = &self.scaling {
            writeln!(s, "scaling_input {}", sc.input_dim).unwrap();
            let keep = sc.keep.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
            writeln!(s, "scaling_keep {keep}").unwrap();
            writeln!(s, "scaling_mean {}", join(&mut sc.mean.iter().copied())).unwrap();
            writeln!(s, "scaling_var {}", join(&mut sc.var.iter().copied())).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(FORMAT_HEADER) {
            return Err(Error::Format(format!("expected header {FORMAT_HEADER:?}")));
        }
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if fields.insert(key, rest).is_some() {
                return Err(Error::Format(format!("duplicate field {key}")));
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Format(format!("missing field {k}")));
        fn nums<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad number {t:?} in {what}"))))
                .collect()
        }
        fn one<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.trim().parse().map_err(|_| Error::Format(format!("bad value for {what}")))
        }
        if get("hidden_activation")? != "softplus" || get("output_activation")? != "sigmoid" {
            return Err(Error::Format("unsupported activation".into()));
        }
        let dims: Vec<usize> = nums(get("dims")?, "dims")?;
        if dims.len() < 2 || dims.contains(&0) || dims[dims.len() - 1] != 1 {
            return Err(Error::Format(format!("invalid dims {dims:?}")));
        }
        let mut layers = Vec::new();
        for (k, d) in dims.windows(2).enumerate() {
            let w: Vec<f64> = nums(get(&format!("weight{k}"))?, "weights")?;
            let b: Vec<f64> = nums(get(&format!("bias{k}"))?, "biases")?;
            if w.len() != d[0] * d[1] || b.len() != d[1] {
                return Err(Error::Format(format!("layer {k} has the wrong parameter count")));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("layer {k} has non-finite parameters")));
            }
            layers.push(Layer { w: DMatrix::from_row_slice(d[1], d[0], &w), b: DVector::from_vec(b) });
        }
        let meta = TrainingMeta {
            epochs_run: one(get("epochs_run")?, "epochs_run")?,
            learning_rate: one(get("learning_rate")?, "learning_rate")?,
            momentum: one(get("momentum")?, "momentum")?,
            seed: one(get("seed")?, "seed")?,
            loss_curve: nums(get("loss")?, "loss")?,
        };
        let scaling = match fields.get("scaling_input") {
            None => None,
            Some(input) => {
                let sc = Scaling {
                    input_dim: one(input, "scaling_input")?,
                    keep: nums(get("scaling_keep")?, "scaling_keep")?,
                    mean: nums(get("scaling_mean")?, "scaling_mean")?,
                    var: nums(get("scaling_var")?, "scaling_var")?,
                };
                if sc.keep.len() != sc.mean.len()
                    || sc.keep.len() != sc.var.len()
                    || sc.keep.len() != dims[0]
                    || sc.keep.iter().any(|&k| k >= sc.input_dim)
                {
                    return Err(Error::Format("inconsistent scaling record".into()));
                }
                Some(sc)
            }
        };
        Ok(Self { layers, meta, scaling })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn compare_rows(x: &DMatrix<f64>, y: &[bool], a: usize, b: usize) -> Ordering {
    for c in 0..x.ncols() {
        match x[(a, c)].total_cmp(&x[(b, c)]) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    y[a].cmp(&y[b])
}

/// Trains on already-scaled features. Samples are put in a canonical order
/// before the seeded shuffle, so the result does not depend on input order.
pub fn ffnn_train(x: &DMatrix<f64>, labels: &[bool], spec: &TrainingSpec, seed: u64) -> Result<FfnnModel> {
    spec.validate()?;
    let n = x.nrows();
    if n == 0 || labels.len() != n {
        return Err(Error::Parameter("need one label per training row".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("training features must be finite".into()));
    }
    let mut dims = vec![x.ncols()];
    dims.extend(&spec.hidden);
    dims.push(1);
    let mut model = FfnnModel::init(&dims, seed)?;
    model.meta.learning_rate = spec.learning_rate;
    model.meta.momentum = spec.momentum;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| compare_rows(x, labels, a, b));
    let xs = x.select_rows(&order);
    let ys: Vec<f64> = order.iter().map(|&i| f64::from(u8::from(labels[i]))).collect();
    let n_pos = ys.iter().filter(|&&v| v > 0.5).count();
    let weights: Vec<f64> = ys
        .iter()
        .map(|&v| {
            let n_c = if v > 0.5 { n_pos } else { n - n_pos };
            if spec.class_weighting && n_c > 0 {
                n as f64 / (2.0 * n_c as f64)
            } else {
                1.0
            }
        })
        .collect();

    let mut shuffle_rng = rng::rng_for(seed, stream::TRAINING);
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut idx: Vec<usize> = (0..n).collect();
    for epoch in 0..spec.epochs {
        idx.shuffle(&mut shuffle_rng);
        for batch in idx.chunks(spec.batch_size) {
            let bx = xs.select_rows(batch);
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let bw: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
            let (_, g) = model.loss_and_gradient(&bx, &by, &bw);
            for ((p, v), gi) in params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = spec.momentum * *v - spec.learning_rate * gi;
                *p += *v;
            }
            model.set_params(&params)?;
        }
        let (loss, _) = model.loss_and_gradient(&xs, &ys, &weights);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss became {loss} at epoch {epoch}; try a smaller learning_rate")));
        }
        model.meta.loss_curve.push(loss);
        model.meta.epochs_run = epoch + 1;
        let curve = &model.meta.loss_curve;
        let w = spec.early_stop_window;
        if w > 0 && curve.len() > w && (curve[curve.len() - 1 - w] - loss).abs() < spec.early_stop_tol {
            break;
        }
    }
    Ok(model)
}

/// Training-set style accuracy of 0.5-cutoff labels.
pub fn label_accuracy(pred: &[bool], truth: &[bool]) -> f64 {
    let ok = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    ok as f64 / truth.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (DMatrix<f64>, Vec<bool>) {
        // centers 2.5 apart along (1, 1)/sqrt 2 with unit-box noise: margin >= 1
        let mut r = rng::rng(seed);
        let mut x = DMatrix::zeros(n, 2);
        let mut y = Vec::new();
        for i in 0..n {
            let up = i % 2 == 0;
            let c = if up { 1.25 } else { -1.25 };
            let u: f64 = r.random_range(-0.5..0.5);
            let t: f64 = r.random_range(-0.25..0.25);
            x[(i, 0)] = (c + t + u) / 2f64.sqrt();
            x[(i, 1)] = (c + t - u) / 2f64.sqrt();
            y.push(up);
        }
        (x, y)
    }

    #[test]
    fn gradient_check() {
        let mut model = FfnnModel::init(&[1, 3, 1], 5).unwrap();
        assert_eq!(model.n_params(), 10);
        let mut r = rng::rng(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let p0: Vec<f64> = (0..10).map(|_| normal.sample(&mut r)).collect();
        model.set_params(&p0).unwrap();
        let x = DMatrix::from_fn(6, 1, |_, _| normal.sample(&mut r));
        let y = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let w = [1.0, 2.0, 0.5, 1.0, 1.5, 1.0];
        let (_, g) = model.loss_and_gradient(&x, &y, &w);
        let h = 1e-6;
        for k in 0..10 {
            let mut p = p0.clone();
            p[k] += h;
            model.set_params(&p).unwrap();
            let up = model.loss_and_gradient(&x, &y, &w).0;
            p[k] -= 2.0 * h;
            model.set_params(&p).unwrap();
            let down = model.loss_and_gradient(&x, &y, &w).0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - g[k]).abs() / (numeric.abs() + g[k].abs()).max(1e-8);
            assert!(rel < 1e-5, "param {k}: {numeric} vs {}", g[k]);
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(200, 2);
        let spec = TrainingSpec { epochs: 200, ..Default::default() };
        let model = ffnn_train(&x, &y, &spec, 3).unwrap();
        let (_, pred) = model.predict(&x).unwrap();
        assert!(label_accuracy(&pred, &y) >= 0.99);
        assert!(model.meta.epochs_run <= 200);
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let (x, y) = blobs(100, 4);
        let spec = TrainingSpec { epochs: 0, ..Default::default() };
        let model = ffnn_train(&x, &y, &spec, 9).unwrap();
        let init = FfnnModel::init(&[2, 32, 16, 1], 9).unwrap();
        assert_eq!(model.layers, init.layers);
        let (_, pred) = model.predict(&x).unwrap();
        let acc = label_accuracy(&pred, &y);
        assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn input_order_does_not_matter() {
        let (x, y) = blobs(150, 6);
        let spec = TrainingSpec { epochs: 20, ..Default::default() };
        let a = ffnn_train(&x, &y, &spec, 1).unwrap();
        let perm: Vec<usize> = (0..150).rev().collect();
        let xp = x.select_rows(&perm);
        let yp: Vec<bool> = perm.iter().map(|&i| y[i]).collect();
        let b = ffnn_train(&xp, &yp, &spec, 1).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn predict_checks() {
        let (x, y) = blobs(60, 8);
        let spec = TrainingSpec { epochs: 5, ..Default::default() };
        let m = ffnn_train(&x, &y, &spec, 2).unwrap();
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
        let z = m.logits(&x).unwrap();
        let (p, labels) = m.predict(&x).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                if z[i] < z[j] {
                    assert!(p[i] <= p[j]);
                }
            }
            assert_eq!(labels[i], p[i] > 0.5);
        }
        assert!(matches!(m.predict(&DMatrix::zeros(3, 4)), Err(Error::Parameter(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = blobs(50, 1);
        let big = x * 1e200;
        let spec = TrainingSpec { epochs: 3, learning_rate: 1e10, ..Default::default() };
        assert!(matches!(ffnn_train(&big, &y, &spec, 0), Err(Error::Divergence(_))));
    }

    #[test]
    fn text_roundtrip_is_bit_exact() {
        let (x, y) = blobs(40, 3);
        let spec = TrainingSpec { epochs: 4, ..Default::default() };
        let mut m = ffnn_train(&x, &y, &spec, 11).unwrap();
        m.scaling =
            Some(Scaling { input_dim: 3, keep: vec![0, 2], mean: vec![0.1, -1.0 / 3.0], var: vec![2.0, 1e-300] });
        let text = m.to_text();
        let back = FfnnModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        m.save(&path).unwrap();
        assert_eq!(FfnnModel::load(&path).unwrap(), m);
        assert!(FfnnModel::from_text("ndscausal-ffnn 2\n").is_err());
        let broken = text.replace("dims 2 32 16 1", "dims 2 32 15 1");
        assert!(FfnnModel::from_text(&broken).is_err());
    }
}
