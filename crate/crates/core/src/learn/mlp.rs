//! Small fully connected network: tanh hidden layers, a logistic output for
//! binary targets or a softmax over four classes, trained by full-batch
//! gradient descent on the mean cross-entropy.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::LearnError;
use crate::format::g17;
use crate::learn::dataset::{Dataset, Target};
use crate::rng::SimRng;

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_EPOCHS: usize = 1000;

/// Layer weights are stored as `out x (in + 1)` matrices whose first column
/// is the bias. Inputs are standardized with the stored mean and scale
/// before the first layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub dims: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl MlpModel {
    /// All-zero weights, identity standardization.
    pub fn zeros(dims: &[usize]) -> Result<Self, LearnError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(LearnError::Format(format!("bad layer dims {dims:?}")));
        }
        let out = *dims.last().unwrap();
        if out != 1 && out != 4 {
            return Err(LearnError::Format(format!("output width must be 1 or 4, got {out}")));
        }
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| DMatrix::zeros(w[1], w[0] + 1)).collect(),
            feature_mean: vec![0.0; dims[0]],
            feature_scale: vec![1.0; dims[0]],
        })
    }

    /// Weights uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases included.
    pub fn random(dims: &[usize], rng: &mut SimRng) -> Result<Self, LearnError> {
        let mut m = MlpModel::zeros(dims)?;
        for w in m.weights.iter_mut() {
            let r = 1.0 / ((w.ncols() - 1) as f64).sqrt();
            // fill row by row so the draw order matches the file order
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] = rng.random_range(-r..r);
                }
            }
        }
        Ok(m)
    }

    /// Random network for `ds`, with `hidden` layer widths and the
    /// standardization fitted to `ds`.
    pub fn for_dataset(ds: &Dataset, hidden: &[usize], rng: &mut SimRng) -> Result<Self, LearnError> {
        ds.validate()?;
        let mut dims = vec![ds.dim];
        dims.extend_from_slice(hidden);
        dims.push(ds.target.outputs());
        let mut m = MlpModel::random(&dims, rng)?;
        m.fit_standardization(ds);
        Ok(m)
    }

    /// Per-feature mean and standard deviation of `ds`; constant features
    /// get scale 1.
    pub fn fit_standardization(&mut self, ds: &Dataset) {
        let n = ds.len() as f64;
        let mut mean = vec![0.0; ds.dim];
        for i in 0..ds.len() {
            mean.iter_mut().zip(ds.row(i)).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; ds.dim];
        for i in 0..ds.len() {
            var.iter_mut().zip(ds.row(i)).zip(&mean).for_each(|((v, x), m)| *v += (x - m) * (x - m));
        }
        self.feature_scale = var.iter().map(|v| if *v > 0.0 { (v / n).sqrt() } else { 1.0 }).collect();
        self.feature_mean = mean;
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn outputs(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    fn check(&self, ds: &Dataset) -> Result<(), LearnError> {
        ds.validate()?;
        if ds.dim != self.input_dim() {
            return Err(LearnError::InputDim { expected: self.input_dim(), got: ds.dim });
        }
        if ds.target.outputs() != self.outputs() {
            return Err(LearnError::OutputDim { outputs: self.outputs(), classes: ds.target.classes() });
        }
        Ok(())
    }

    /// Standardized `n x D` input matrix.
    fn standardize(&self, rows: &[f64], n: usize) -> DMatrix<f64> {
        let d = self.input_dim();
        DMatrix::from_fn(n, d, |i, j| (rows[i * d + j] - self.feature_mean[j]) / self.feature_scale[j])
    }

    /// Activations of every layer; the last entry holds the output logits.
    fn forward(&self, x: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x];
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let a = acts.last().unwrap();
            let (fan_in, out) = (w.ncols() - 1, w.nrows());
            let mut z = a * w.view((0, 1), (out, fan_in)).transpose();
            for mut row in z.row_iter_mut() {
                row += w.column(0).transpose();
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities for one input row: `[P(theta_1)]` for a binary
    /// model, the four joint-hypothesis probabilities otherwise.
    pub fn predict(&self, row: &[f64]) -> Vec<f64> {
        let acts = self.forward(self.standardize(row, 1));
        let z: Vec<f64> = acts.last().unwrap().row(0).iter().copied().collect();
        output_probabilities(&z)
    }

    /// Class index: `1` iff `P(theta_1) > 0.5` for binary models, the
    /// lowest-index argmax otherwise.
    pub fn decide(&self, row: &[f64]) -> usize {
        decide_from(&self.predict(row))
    }

    /// Mean cross-entropy and its gradient (same shapes as `weights`).
    pub fn loss_and_gradient(&self, ds: &Dataset) -> Result<(f64, Vec<DMatrix<f64>>), LearnError> {
        self.check(ds)?;
        let x = self.standardize(&ds.inputs, ds.len());
        Ok(self.loss_grad_std(&x, &ds.labels))
    }

    pub fn loss(&self, ds: &Dataset) -> Result<f64, LearnError> {
        self.check(ds)?;
        let x = self.standardize(&ds.inputs, ds.len());
        let acts = self.forward(x);
        Ok(mean_loss(acts.last().unwrap(), &ds.labels))
    }

    fn loss_grad_std(&self, x: &DMatrix<f64>, labels: &[usize]) -> (f64, Vec<DMatrix<f64>>) {
        let n = labels.len() as f64;
        let acts = self.forward(x.clone());
        let logits = acts.last().unwrap();
        let loss = mean_loss(logits, labels);
        // d loss / d logits = (probabilities - one-hot) / n
        let mut delta = logits.clone();
        for (i, &y) in labels.iter().enumerate() {
            if delta.ncols() == 1 {
                delta[(i, 0)] = (logistic(delta[(i, 0)]) - y as f64) / n;
            } else {
                let p = softmax(&delta.row(i).iter().copied().collect::<Vec<_>>());
                for (c, pc) in p.iter().enumerate() {
                    delta[(i, c)] = (pc - if c == y { 1.0 } else { 0.0 }) / n;
                }
            }
        }
        let mut grads: Vec<DMatrix<f64>> = self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        for l in (0..self.weights.len()).rev() {
            let a_prev = &acts[l];
            let w = &self.weights[l];
            let (fan_in, out) = (w.ncols() - 1, w.nrows());
            let g = &mut grads[l];
            g.view_mut((0, 1), (out, fan_in)).copy_from(&(delta.transpose() * a_prev));
            for c in 0..out {
                g[(c, 0)] = delta.column(c).sum();
            }
            if l > 0 {
                let mut back = &delta * w.view((0, 1), (out, fan_in));
                back.zip_apply(a_prev, |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
        }
        (loss, grads)
    }

    /// Write the text model file: dims, standardization, then each layer's
    /// weights row by row, all at 17 significant digits.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), LearnError> {
        let join = |xs: &mut dyn Iterator<Item = f64>| xs.map(g17).collect::<Vec<_>>().join(" ");
        writeln!(out, "mlp v1")?;
        writeln!(out, "dims {}", self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "))?;
        writeln!(out, "mean {}", join(&mut self.feature_mean.iter().copied()))?;
        writeln!(out, "scale {}", join(&mut self.feature_scale.iter().copied()))?;
        for (l, w) in self.weights.iter().enumerate() {
            writeln!(out, "layer {} {} {}", l + 1, w.nrows(), w.ncols())?;
            for row in w.row_iter() {
                writeln!(out, "{}", join(&mut row.iter().copied()))?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, LearnError> {
        let lines: Vec<String> = input.lines().collect::<Result<_, _>>()?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let bad = |what: &str| LearnError::Format(what.to_string());
        if it.next() != Some("mlp v1") {
            return Err(bad("missing 'mlp v1' header"));
        }
        fn tagged<'a>(it: &mut impl Iterator<Item = &'a str>, tag: &str) -> Result<Vec<String>, LearnError> {
            let bad = |what: String| LearnError::Format(what);
            let line = it.next().ok_or_else(|| bad(format!("missing '{tag}' line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(bad(format!("expected '{tag}', got '{line}'")));
            }
            Ok(parts.map(String::from).collect())
        }
        let parse_f = |s: &String| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
        let parse_u = |s: &String| s.parse::<usize>().map_err(|_| bad(&format!("bad integer '{s}'")));
        let dims: Vec<usize> = tagged(&mut it, "dims")?.iter().map(parse_u).collect::<Result<_, _>>()?;
        let mut model = MlpModel::zeros(&dims)?;
        model.feature_mean = tagged(&mut it, "mean")?.iter().map(parse_f).collect::<Result<_, _>>()?;
        model.feature_scale = tagged(&mut it, "scale")?.iter().map(parse_f).collect::<Result<_, _>>()?;
        if model.feature_mean.len() != dims[0] || model.feature_scale.len() != dims[0] {
            return Err(bad("standardization length does not match input width"));
        }
        for l in 0..model.weights.len() {
            let head = tagged(&mut it, "layer")?;
            let (rows, cols) = (model.weights[l].nrows(), model.weights[l].ncols());
            if head.len() != 3 || parse_u(&head[1])? != rows || parse_u(&head[2])? != cols {
                return Err(bad(&format!("layer {} header does not match dims", l + 1)));
            }
            for r in 0..rows {
                let line = it.next().ok_or_else(|| bad("truncated weights"))?;
                let vals: Vec<f64> =
                    line.split_whitespace().map(|s| parse_f(&s.to_string())).collect::<Result<_, _>>()?;
                if vals.len() != cols {
                    return Err(bad(&format!("layer {} row {} has {} values", l + 1, r + 1, vals.len())));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    model.weights[l][(r, c)] = v;
                }
            }
        }
        if model.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(bad("non-finite weight"));
        }
        Ok(model)
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn output_probabilities(z: &[f64]) -> Vec<f64> {
    if z.len() == 1 {
        vec![logistic(z[0])]
    } else {
        softmax(z)
    }
}

fn decide_from(p: &[f64]) -> usize {
    if p.len() == 1 {
        return usize::from(p[0] > 0.5);
    }
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn mean_loss(logits: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += if logits.ncols() == 1 {
            let z = logits[(i, 0)];
            softplus(z) - y as f64 * z
        } else {
            let row: Vec<f64> = logits.row(i).iter().copied().collect();
            let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            top + row.iter().map(|v| (v - top).exp()).sum::<f64>().ln() - row[y]
        };
    }
    total / labels.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: DEFAULT_EPOCHS, learning_rate: DEFAULT_LEARNING_RATE }
    }
}

/// Outcome of [`train`]. `loss_trace[e]` is the loss before update `e`; the
/// final entry is the loss of the returned model. `diverged` is set when a
/// non-finite loss stopped training, in which case `model` is the last
/// state with a finite loss.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub loss_trace: Vec<f64>,
    pub diverged: bool,
}

/// Full-batch gradient descent with a fixed step.
pub fn train(model: &MlpModel, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, LearnError> {
    model.check(ds)?;
    let x = model.standardize(&ds.inputs, ds.len());
    let mut current = model.clone();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, grads) = current.loss_grad_std(&x, &ds.labels);
        if !loss.is_finite() {
            return Ok(TrainOutcome { model: current, loss_trace: trace, diverged: true });
        }
        trace.push(loss);
        let mut next = current.clone();
        for (w, g) in next.weights.iter_mut().zip(&grads) {
            w.zip_apply(g, |wv, gv| *wv -= cfg.learning_rate * gv);
        }
        if next.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Ok(TrainOutcome { model: current, loss_trace: trace, diverged: true });
        }
        current = next;
    }
    let acts = current.forward(x);
    let last = mean_loss(acts.last().unwrap(), &ds.labels);
    if !last.is_finite() {
        return Ok(TrainOutcome { model: model.clone(), loss_trace: trace, diverged: true });
    }
    trace.push(last);
    Ok(TrainOutcome { model: current, loss_trace: trace, diverged: false })
}

/// Fraction of rows of `ds` the model gets wrong.
pub fn training_error(model: &MlpModel, ds: &Dataset) -> f64 {
    let wrong = (0..ds.len()).filter(|&i| model.decide(ds.row(i)) != ds.labels[i]).count();
    wrong as f64 / ds.len() as f64
}

/// Dataset shell for tests and toy problems: no provenance.
pub fn toy_dataset(inputs: Vec<f64>, dim: usize, labels: Vec<usize>, target: Target) -> Dataset {
    Dataset { inputs, dim, labels, target, config_text: String::new(), seed: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream_rng};

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n * d).map(|_| 2.0 * standard_normal(&mut rng)).collect()
    }

    fn finite_difference_check(target: Target, labels: Vec<usize>) {
        let d = 3;
        let ds = toy_dataset(random_rows(5, d, 1), d, labels, target);
        let mut rng = stream_rng(2, 0);
        let mut model = MlpModel::for_dataset(&ds, &[4, 3], &mut rng).unwrap();
        // larger weights so tanh is off its linear part
        model.weights.iter_mut().for_each(|w| w.apply(|v| *v *= 3.0));
        let (_, grads) = model.loss_and_gradient(&ds).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for l in 0..model.weights.len() {
            for idx in 0..model.weights[l].len() {
                let mut plus = model.clone();
                plus.weights[l][idx] += eps;
                let mut minus = model.clone();
                minus.weights[l][idx] -= eps;
                let fd = (plus.loss(&ds).unwrap() - minus.loss(&ds).unwrap()) / (2.0 * eps);
                let an = grads[l][idx];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_binary_head() {
        finite_difference_check(Target::EdgeCell1, vec![0, 1, 1, 0, 1]);
    }

    #[test]
    fn gradient_softmax_head() {
        finite_difference_check(Target::Cloud, vec![0, 3, 1, 2, 3]);
    }

    #[test]
    fn zero_weights() {
        let bin = MlpModel::zeros(&[3, 5, 1]).unwrap();
        assert_eq!(bin.predict(&[1.0, -2.0, 0.5]), vec![0.5]);
        assert_eq!(bin.decide(&[1.0, -2.0, 0.5]), 0);
        let four = MlpModel::zeros(&[3, 5, 4]).unwrap();
        assert_eq!(four.predict(&[1.0, -2.0, 0.5]), vec![0.25; 4]);
        assert_eq!(four.decide(&[0.0; 3]), 0);
    }

    #[test]
    fn probabilities_normalize() {
        let mut rng = stream_rng(3, 0);
        let model = MlpModel::random(&[6, 8, 8, 4], &mut rng).unwrap();
        let rows = random_rows(1000, 6, 4);
        for row in rows.chunks(6) {
            let p = model.predict(&row.iter().map(|v| v * 10.0).collect::<Vec<_>>());
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_blobs() {
        let mut rng = stream_rng(5, 0);
        let n = 200;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let c = if y == 0 { -3.0 } else { 3.0 };
            inputs.push(c + 0.5 * standard_normal(&mut rng));
            inputs.push(c + 0.5 * standard_normal(&mut rng));
            labels.push(y);
        }
        let ds = toy_dataset(inputs, 2, labels, Target::EdgeCell1);
        let model = MlpModel::for_dataset(&ds, &DEFAULT_HIDDEN, &mut stream_rng(6, 0)).unwrap();
        let out = train(&model, &ds, &TrainConfig { epochs: 500, learning_rate: DEFAULT_LEARNING_RATE }).unwrap();
        assert!(!out.diverged);
        assert_eq!(training_error(&out.model, &ds), 0.0);
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let ds = toy_dataset(random_rows(20, 3, 7), 3, (0..20).map(|i| i % 4).collect(), Target::Cloud);
        let model = MlpModel::for_dataset(&ds, &[5], &mut stream_rng(8, 0)).unwrap();
        let same = train(&model, &ds, &TrainConfig { epochs: 0, learning_rate: 0.01 }).unwrap();
        assert_eq!(same.model, model);
        assert_eq!(same.loss_trace.len(), 1);
        let cfg = TrainConfig { epochs: 30, learning_rate: 0.05 };
        let a = train(&model, &ds, &cfg).unwrap();
        let b = train(&model, &ds, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn divergence_keeps_last_finite_state() {
        let ds = toy_dataset(vec![3.0, -1.0, 1.0, 2.0], 1, vec![0, 0, 0, 1], Target::EdgeCell1);
        let model = MlpModel::zeros(&[1, 2, 1]).unwrap();
        let out = train(&model, &ds, &TrainConfig { epochs: 50, learning_rate: f64::INFINITY }).unwrap();
        assert!(out.diverged);
        assert!(out.model.weights.iter().all(|w| w.iter().all(|v| v.is_finite())));
        assert_eq!(out.model, model);
    }

    #[test]
    fn text_round_trip() {
        let model = MlpModel::random(&[3, 4, 4], &mut stream_rng(9, 0)).unwrap();
        let mut buf = Vec::new();
        model.write_text(&mut buf).unwrap();
        let back = MlpModel::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(MlpModel::read_text(&b"mlp v1\ndims 3 4\n"[..]).is_err());
    }
}
