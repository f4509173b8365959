//! Layers with explicit forward and backward passes.
//!
//! A forward pass returns its output together with whatever the matching
//! backward pass needs; backward passes accumulate into `Parameter::grad` and
//! return the gradient with respect to their input.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::RandomSource;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter<T = f32> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Normal(0, std) initialization.
    pub fn normal(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f32,
        rng: &mut RandomSource,
    ) -> Self {
        let mut value = Matrix::zeros(rows, cols);
        value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = T::from_f64((rng.normal() * std) as f64));
        Parameter::new(name, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Anything that owns parameters. The order of `parameters()` is stable and
/// identical across precisions.
pub trait Module<T: Scalar = f32> {
    fn parameters(&self) -> Vec<&Parameter<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Copies parameter values between modules of the same layout, converting
/// precision as needed.
pub fn copy_parameters<A, B, S, T>(src: &A, dst: &mut B) -> Result<()>
where
    S: Scalar,
    T: Scalar,
    A: Module<S> + ?Sized,
    B: Module<T> + ?Sized,
{
    let from = src.parameters();
    let to = dst.parameters_mut();
    if from.len() != to.len() {
        return Err(Error::ShapeMismatch {
            op: "copy_parameters",
            left: (from.len(), 0),
            right: (to.len(), 0),
        });
    }
    for (s, d) in from.into_iter().zip(to) {
        if s.value.shape() != d.value.shape() {
            return Err(Error::TensorShapeMismatch {
                name: d.name.clone(),
                expected: d.value.shape(),
                found: s.value.shape(),
            });
        }
        d.value = s.value.cast();
    }
    Ok(())
}

/// Affine map `x · W + b` with `W: in × out`; the bias is optional.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f32> {
    pub weight: Parameter<T>,
    pub bias: Option<Parameter<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(prefix: &str, input: usize, output: usize, rng: &mut RandomSource) -> Self {
        let mut layer = Linear::without_bias(prefix, input, output, rng);
        layer.bias = Some(Parameter::new(format!("{prefix}.bias"), Matrix::zeros(1, output)));
        layer
    }

    pub fn without_bias(prefix: &str, input: usize, output: usize, rng: &mut RandomSource) -> Self {
        let std = (1.0 / input as f32).sqrt();
        Linear {
            weight: Parameter::normal(format!("{prefix}.weight"), input, output, std, rng),
            bias: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = x.matmul(&self.weight.value)?;
        if let Some(bias) = &self.bias {
            add_bias(&mut out, &bias.value)?;
        }
        Ok(out)
    }

    /// `x` is the input given to `forward`.
    pub fn backward(&mut self, x: &Matrix<T>, dy: &Matrix<T>) -> Result<Matrix<T>> {
        self.weight.grad.add_matmul_at(x, dy)?;
        if let Some(bias) = &mut self.bias {
            bias.grad.add_assign(&bias_backward(dy))?;
        }
        dy.matmul_bt(&self.weight.value)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Adds a `1 × cols` row vector to every row of `x`.
pub fn add_bias<T: Scalar>(x: &mut Matrix<T>, bias: &Matrix<T>) -> Result<()> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(Error::ShapeMismatch {
            op: "bias_add",
            left: x.shape(),
            right: bias.shape(),
        });
    }
    let b = bias.row(0);
    for r in 0..x.rows() {
        for (v, bv) in x.row_mut(r).iter_mut().zip(b) {
            *v += *bv;
        }
    }
    Ok(())
}

/// Gradient of `add_bias` with respect to the bias.
pub fn bias_backward<T: Scalar>(dy: &Matrix<T>) -> Matrix<T> {
    dy.sum_rows()
}

/// Lookup table mapping ids to rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T = f32> {
    pub table: Parameter<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(name: &str, count: usize, dim: usize, rng: &mut RandomSource) -> Self {
        Embedding {
            table: Parameter::normal(name, count, dim, 0.1, rng),
        }
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Matrix<T>> {
        let size = self.table.value.rows();
        let mut out = Matrix::zeros(ids.len(), self.table.value.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= size {
                return Err(Error::IdOutOfRange {
                    id,
                    vocab_size: size,
                });
            }
            out.row_mut(r).copy_from_slice(self.table.value.row(id));
        }
        Ok(out)
    }

    pub fn backward(&mut self, ids: &[usize], dy: &Matrix<T>) {
        for (r, &id) in ids.iter().enumerate() {
            for (g, d) in self.table.grad.row_mut(id).iter_mut().zip(dy.row(r)) {
                *g += *d;
            }
        }
    }
}

impl<T: Scalar> Module<T> for Embedding<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.table]
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.table]
    }
}

/// Row-wise layer normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T = f32> {
    normalized: Matrix<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(prefix: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Parameter::new(format!("{prefix}.gamma"), Matrix::filled(1, dim, T::one())),
            beta: Parameter::new(format!("{prefix}.beta"), Matrix::zeros(1, dim)),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, LayerNormCache<T>)> {
        if x.cols() != self.gamma.value.cols() {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: x.shape(),
                right: self.gamma.value.shape(),
            });
        }
        let n = x.cols() as f64;
        let mut normalized = Matrix::zeros(x.rows(), x.cols());
        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        let gamma = self.gamma.value.row(0);
        let beta = self.beta.value.row(0);
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
            let var = row
                .iter()
                .map(|v| {
                    let d = v.as_f64() - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std.push(istd);
            let nrow = normalized.row_mut(r);
            for (c, v) in row.iter().enumerate() {
                nrow[c] = T::from_f64((v.as_f64() - mean) * istd);
            }
            let orow = out.row_mut(r);
            for c in 0..orow.len() {
                orow[c] = nrow[c] * gamma[c] + beta[c];
            }
        }
        Ok((out, LayerNormCache { normalized, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &Matrix<T>) -> Result<Matrix<T>> {
        let xhat = &cache.normalized;
        if xhat.shape() != dy.shape() {
            return Err(Error::ShapeMismatch {
                op: "layer_norm_backward",
                left: xhat.shape(),
                right: dy.shape(),
            });
        }
        let cols = dy.cols();
        let n = cols as f64;
        let mut dx = Matrix::zeros(dy.rows(), cols);
        let gamma: Vec<f64> = self.gamma.value.row(0).iter().map(|g| g.as_f64()).collect();
        {
            let dgamma = self.gamma.grad.row_mut(0);
            for r in 0..dy.rows() {
                for ((g, &d), &xh) in dgamma.iter_mut().zip(dy.row(r)).zip(xhat.row(r)) {
                    *g += d * xh;
                }
            }
        }
        self.beta.grad.add_assign(&dy.sum_rows())?;
        let mut dxhat = vec![0f64; cols];
        for r in 0..dy.rows() {
            let dyr = dy.row(r);
            let xr = xhat.row(r);
            let mut sum_d = 0f64;
            let mut sum_dx = 0f64;
            for c in 0..cols {
                dxhat[c] = dyr[c].as_f64() * gamma[c];
                sum_d += dxhat[c];
                sum_dx += dxhat[c] * xr[c].as_f64();
            }
            let istd = cache.inv_std[r];
            let out = dx.row_mut(r);
            for c in 0..cols {
                out[c] = T::from_f64(istd / n * (n * dxhat[c] - sum_d - xr[c].as_f64() * sum_dx));
            }
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.gamma, &self.beta]
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let (c, a, half, one) = (
        T::from_f64(GELU_C),
        T::from_f64(GELU_A),
        T::from_f64(0.5),
        T::one(),
    );
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| {
        let z = *v;
        *v = half * z * (one + (c * (z + a * z * z * z)).tanh());
    });
    out
}

/// `x` is the input given to `gelu`.
pub fn gelu_backward<T: Scalar>(x: &Matrix<T>, dy: &Matrix<T>) -> Result<Matrix<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::ShapeMismatch {
            op: "gelu_backward",
            left: x.shape(),
            right: dy.shape(),
        });
    }
    let (c, a, half, one, three) = (
        T::from_f64(GELU_C),
        T::from_f64(GELU_A),
        T::from_f64(0.5),
        T::one(),
        T::from_f64(3.0),
    );
    let mut dx = dy.clone();
    for (d, &z) in dx.data_mut().iter_mut().zip(x.data()) {
        let t = (c * (z + a * z * z * z)).tanh();
        let dinner = c * (one + three * a * z * z);
        *d *= half * (one + t) + half * z * (one - t * t) * dinner;
    }
    Ok(dx)
}

/// Row-wise softmax.
pub fn softmax_rows<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (o, e) in out.row_mut(r).iter_mut().zip(&exps) {
            *o = T::from_f64(e / total);
        }
    }
    out
}

/// `probs` is the output of `softmax_rows`.
pub fn softmax_rows_backward<T: Scalar>(probs: &Matrix<T>, dy: &Matrix<T>) -> Result<Matrix<T>> {
    if probs.shape() != dy.shape() {
        return Err(Error::ShapeMismatch {
            op: "softmax_backward",
            left: probs.shape(),
            right: dy.shape(),
        });
    }
    let mut dx = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let d = dy.row(r);
        let inner: f64 = p.iter().zip(d).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
        for (o, (pv, dv)) in dx.row_mut(r).iter_mut().zip(p.iter().zip(d)) {
            *o = T::from_f64(pv.as_f64() * (dv.as_f64() - inner));
        }
    }
    Ok(dx)
}

/// Inverted dropout. Returns the output and the scaling mask (absent when
/// dropout is inactive).
pub fn dropout<T: Scalar>(
    x: &Matrix<T>,
    p: f32,
    rng: Option<&mut RandomSource>,
) -> (Matrix<T>, Option<Vec<T>>) {
    let rng = match rng {
        Some(rng) if p > 0.0 => rng,
        _ => return (x.clone(), None),
    };
    let keep = 1.0 - p;
    let scale = T::from_f64(1.0 / keep as f64);
    let mask: Vec<T> = (0..x.data().len())
        .map(|_| if rng.uniform() < keep { scale } else { T::zero() })
        .collect();
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    (out, Some(mask))
}

pub fn dropout_backward<T: Scalar>(mask: Option<&[T]>, dy: &Matrix<T>) -> Matrix<T> {
    let mut dx = dy.clone();
    if let Some(mask) = mask {
        for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
    dx
}

/// Mean cross-entropy over the rows whose `include` flag is set.
/// Returns the loss and the gradient with respect to the logits.
pub fn cross_entropy<T: Scalar>(
    logits: &Matrix<T>,
    targets: &[usize],
    include: &[bool],
) -> Result<(f64, Matrix<T>)> {
    if targets.len() != logits.rows() || include.len() != logits.rows() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape(),
            right: (targets.len(), include.len()),
        });
    }
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let count = include.iter().filter(|&&b| b).count();
    if count == 0 {
        return Ok((0.0, grad));
    }
    let probs = softmax_rows(logits);
    let mut total = 0f64;
    for r in 0..logits.rows() {
        if !include[r] {
            continue;
        }
        let t = targets[r];
        if t >= logits.cols() {
            return Err(Error::IdOutOfRange {
                id: t,
                vocab_size: logits.cols(),
            });
        }
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        total += lse - row[t].as_f64();
        let g = grad.row_mut(r);
        g.copy_from_slice(probs.row(r));
        g[t] -= T::one();
    }
    grad.scale(T::from_f64(1.0 / count as f64));
    Ok((total / count as f64, grad))
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// Mean binary cross-entropy of probabilities against 0/1 targets.
pub fn binary_cross_entropy(probs: &[f32], targets: &[f32]) -> f64 {
    const EPS: f64 = 1e-7;
    let n = probs.len().max(1) as f64;
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = (p as f64).clamp(EPS, 1.0 - EPS);
            -(y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln())
        })
        .sum();
    total / n
}

/// Mean binary cross-entropy computed from logits, with the gradient with
/// respect to each logit.
pub fn binary_cross_entropy_with_logits<T: Scalar>(logits: &[T], targets: &[f32]) -> (f64, Vec<T>) {
    let n = logits.len().max(1) as f64;
    let mut total = 0f64;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        let z64 = z.as_f64();
        let y = y as f64;
        total += z64.max(0.0) - z64 * y + (1.0 + (-z64.abs()).exp()).ln();
        grad.push(T::from_f64((sigmoid(z64) - y) / n));
    }
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = RandomSource::new(3);
        let mut x: Matrix = Matrix::zeros(5, 7);
        x.data_mut().iter_mut().for_each(|v| *v = rng.normal() * 10.0);
        let p = softmax_rows(&x);
        for r in 0..5 {
            let s: f32 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_classes() {
        let logits: Matrix = Matrix::zeros(3, 5);
        let (loss, _) = cross_entropy(&logits, &[0, 2, 4], &[true; 3]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-6);
        assert!((loss - 1.60944).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_ignores_masked_rows() {
        let mut logits: Matrix = Matrix::zeros(2, 3);
        logits.set(1, 0, 50.0);
        let (loss, grad) = cross_entropy(&logits, &[1, 2], &[true, false]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-6);
        assert!(grad.row(1).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dropout_zero_is_identity() {
        let mut rng = RandomSource::new(1);
        let x: Matrix = Matrix::from_vec(2, 2, vec![1., -2., 3., 4.]).unwrap();
        let (y, mask) = dropout(&x, 0.0, Some(&mut rng));
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn dropout_scales_kept_values() {
        let mut rng = RandomSource::new(1);
        let x: Matrix = Matrix::filled(10, 10, 1.0);
        let (y, _) = dropout(&x, 0.5, Some(&mut rng));
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(y.data().iter().any(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        assert_eq!(sigmoid(0.0f32), 0.5);
        assert!(sigmoid(-1000.0f32).is_finite());
        assert!(sigmoid(1000.0f32).is_finite());
        let (loss, grad) = binary_cross_entropy_with_logits(&[1000.0f32, -1000.0], &[0.0, 1.0]);
        assert!(loss.is_finite() && grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn bce_forms_agree() {
        let logits = [0.3f32, -1.2, 2.0];
        let targets = [1.0f32, 0.0, 0.0];
        let probs: Vec<f32> = logits.iter().map(|&z| sigmoid(z)).collect();
        let (from_logits, _) = binary_cross_entropy_with_logits(&logits, &targets);
        assert!((binary_cross_entropy(&probs, &targets) - from_logits).abs() < 1e-5);
    }

    #[test]
    fn precision_cast_round_trips() {
        let mut rng = RandomSource::new(2);
        let a: Linear = Linear::new("l", 3, 2, &mut rng);
        let mut b: Linear<f64> = Linear::new("l", 3, 2, &mut RandomSource::new(9));
        copy_parameters(&a, &mut b).unwrap();
        let mut c: Linear = Linear::new("l", 3, 2, &mut RandomSource::new(7));
        copy_parameters(&b, &mut c).unwrap();
        assert_eq!(a, c);
    }
}
