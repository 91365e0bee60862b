//! Batched layer primitives.
//!
//! A batch of sequences is an `(channels, batch * len)` matrix whose column
//! `b * len + s` holds time step `s` of sample `b`. Convolutions then reduce
//! to one matrix product per kernel tap over time-shifted copies.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

/// Named access to every trainable tensor, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;
    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>>;

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut out = self.clone();
        for mut t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Fills `a` uniformly in ±1/sqrt(fan_in).
pub(crate) fn init_array<R: Rng, D: ndarray::Dimension>(rng: &mut R, fan_in: usize, a: &mut ndarray::Array<f64, D>) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in a.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Copy of `x` delayed by `shift` steps within each sample, zero-filled.
pub fn delay(x: &Array2<f64>, len: usize, shift: usize) -> Array2<f64> {
    if shift == 0 {
        return x.clone();
    }
    let mut out = Array2::zeros(x.raw_dim());
    if shift >= len {
        return out;
    }
    let batch = x.ncols() / len;
    for b in 0..batch {
        let base = b * len;
        out.slice_mut(s![.., base + shift..base + len])
            .assign(&x.slice(s![.., base..base + len - shift]));
    }
    out
}

/// Adjoint of [`delay`]: accumulates `g` advanced by `shift` steps into `acc`.
pub fn add_advanced(acc: &mut Array2<f64>, g: &Array2<f64>, len: usize, shift: usize) {
    if shift == 0 {
        *acc += g;
        return;
    }
    if shift >= len {
        return;
    }
    let batch = g.ncols() / len;
    for b in 0..batch {
        let base = b * len;
        let mut dst = acc.slice_mut(s![.., base..base + len - shift]);
        dst += &g.slice(s![.., base + shift..base + len]);
    }
}

/// Keeps the last `keep` steps of every sample.
pub fn crop_tail(x: &Array2<f64>, len: usize, keep: usize) -> Array2<f64> {
    if keep >= len {
        return x.clone();
    }
    let batch = x.ncols() / len;
    let mut out = Array2::zeros((x.nrows(), batch * keep));
    for b in 0..batch {
        out.slice_mut(s![.., b * keep..(b + 1) * keep])
            .assign(&x.slice(s![.., b * len + len - keep..(b + 1) * len]));
    }
    out
}

/// Adjoint of [`crop_tail`].
pub fn uncrop_tail(g: &Array2<f64>, keep: usize, len: usize) -> Array2<f64> {
    if keep >= len {
        return g.clone();
    }
    let batch = g.ncols() / keep;
    let mut out = Array2::zeros((g.nrows(), batch * len));
    for b in 0..batch {
        out.slice_mut(s![.., b * len + len - keep..(b + 1) * len])
            .assign(&g.slice(s![.., b * keep..(b + 1) * keep]));
    }
    out
}

/// Causal dilated 1-D convolution: output step `s` sees inputs
/// `s - (k-1)·dilation ..= s`, with zero padding before the sequence start.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalConv1d {
    /// (out, in, kernel)
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub dilation: usize,
}

impl CausalConv1d {
    pub fn zeros(inputs: usize, outputs: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            weight: Array3::zeros((outputs, inputs, kernel)),
            bias: Array1::zeros(outputs),
            dilation,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let (_, inputs, kernel) = self.weight.dim();
        init_array(rng, inputs * kernel, &mut self.weight);
        self.bias.fill(0.0);
    }

    pub fn inputs(&self) -> usize {
        self.weight.dim().1
    }

    pub fn outputs(&self) -> usize {
        self.weight.dim().0
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    fn tap_delay(&self, tap: usize) -> usize {
        (self.kernel() - 1 - tap) * self.dilation
    }

    pub fn forward(&self, x: &Array2<f64>, len: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.outputs(), x.ncols()));
        for tap in 0..self.kernel() {
            let shifted = delay(x, len, self.tap_delay(tap));
            general_mat_mul(1.0, &self.weight.index_axis(Axis(2), tap), &shifted, 1.0, &mut out);
        }
        out += &self.bias.view().insert_axis(Axis(1));
        out
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        len: usize,
        grad_out: &Array2<f64>,
        grads: &mut CausalConv1d,
    ) -> Array2<f64> {
        let mut grad_in = Array2::zeros(x.raw_dim());
        for tap in 0..self.kernel() {
            let shift = self.tap_delay(tap);
            let shifted = delay(x, len, shift);
            let mut gw = grads.weight.index_axis_mut(Axis(2), tap);
            general_mat_mul(1.0, grad_out, &shifted.t(), 1.0, &mut gw);
            let mut back = Array2::zeros(x.raw_dim());
            general_mat_mul(1.0, &self.weight.index_axis(Axis(2), tap).t(), grad_out, 0.0, &mut back);
            add_advanced(&mut grad_in, &back, len, shift);
        }
        grads.bias += &grad_out.sum_axis(Axis(1));
        grad_in
    }
}

/// Per-time-step channel mixing (a kernel-1 convolution).
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise {
    /// (out, in)
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Pointwise {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let inputs = self.weight.ncols();
        init_array(rng, inputs, &mut self.weight);
        self.bias.fill(0.0);
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = self.weight.dot(x);
        out += &self.bias.view().insert_axis(Axis(1));
        out
    }

    pub fn backward(&self, x: &Array2<f64>, grad_out: &Array2<f64>, grads: &mut Pointwise) -> Array2<f64> {
        general_mat_mul(1.0, grad_out, &x.t(), 1.0, &mut grads.weight);
        grads.bias += &grad_out.sum_axis(Axis(1));
        self.weight.t().dot(grad_out)
    }
}

pub(crate) fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given its pre-activation.
pub(crate) fn relu_backward(pre: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    ndarray::Zip::from(&mut out).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}
