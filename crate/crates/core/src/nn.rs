//! Layer helpers and weight initialization shared by all models.

use rand::Rng as _;

use crate::autodiff::{BoundParams, Graph, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Slope used by every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
}

pub fn dense_weight(inputs: usize, outputs: usize, rng: &mut Rng) -> Tensor {
    glorot_uniform(&[inputs, outputs], inputs, outputs, rng)
}

/// Kernel `[out, in, k, k]` for [`Graph::conv2d`].
pub fn conv_kernel(out_ch: usize, in_ch: usize, k: usize, rng: &mut Rng) -> Tensor {
    glorot_uniform(&[out_ch, in_ch, k, k], in_ch * k * k, out_ch * k * k, rng)
}

/// Kernel `[in, out, k, k]` for [`Graph::conv_transpose2d`].
pub fn conv_transpose_kernel(in_ch: usize, out_ch: usize, k: usize, rng: &mut Rng) -> Tensor {
    glorot_uniform(&[in_ch, out_ch, k, k], in_ch * k * k, out_ch * k * k, rng)
}

/// `x · W + b` with parameters `{prefix}.w` / `{prefix}.b`.
pub fn dense(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let y = g.matmul(x, p.get(&format!("{prefix}.w"))?)?;
    g.add_row_bias(y, p.get(&format!("{prefix}.b"))?)
}

pub fn conv(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var, stride: usize, padding: usize) -> Result<Var> {
    let y = g.conv2d(x, p.get(&format!("{prefix}.w"))?, stride, padding)?;
    g.add_channel_bias(y, p.get(&format!("{prefix}.b"))?)
}

pub fn conv_t(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var, stride: usize, padding: usize) -> Result<Var> {
    let y = g.conv_transpose2d(x, p.get(&format!("{prefix}.w"))?, stride, padding)?;
    g.add_channel_bias(y, p.get(&format!("{prefix}.b"))?)
}

/// One-hot rows `[labels.len(), classes]`.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * classes + l] = 1.0;
    }
    t
}

/// Mean squared error between a graph value and a fixed target.
pub fn mse(g: &mut Graph, prediction: Var, target: &Tensor) -> Result<Var> {
    let t = g.constant(target.clone())?;
    let d = g.sub(prediction, t)?;
    let sq = g.square(d)?;
    g.mean(sq)
}
