//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records one forward computation. Every op evaluates eagerly,
//! checks its output for NaN/Inf and appends a node; [`Graph::backward`]
//! then walks the tape in reverse. Graphs are built fresh for each step.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::{col2im, gemm, im2col, Window};
use crate::tensor::{ParamSet, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Conv2d { input: Var, kernel: Var, stride: usize, padding: usize },
    ConvTranspose2d { input: Var, kernel: Var, stride: usize, padding: usize },
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Square(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    label: String,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Parameter leaves of one [`ParamSet`] registered on a graph.
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::Incompatible(format!("missing parameter `{name}`")))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, label: impl Into<String>) -> Result<Var> {
        let label = label.into();
        if !value.is_finite() {
            return Err(Error::NonFinite { node: format!("{label}#{}", self.nodes.len()) });
        }
        self.nodes.push(Node { value, op, label });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape { op, left: self.shape(a).to_vec(), right: self.shape(b).to_vec() }
    }

    /// Registers a trainable leaf; gradients are reported under `name`.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Result<Var> {
        let v = self.push(value.clone(), Op::Leaf, name)?;
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    pub fn register(&mut self, params: &ParamSet) -> Result<BoundParams> {
        let mut vars = HashMap::with_capacity(params.len());
        for (name, t) in params.iter() {
            vars.insert(name.to_string(), self.param(name, t)?);
        }
        Ok(BoundParams { vars })
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "const")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_with(self.value(b), "add", |x, y| x + y)?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_with(self.value(b), "sub", |x, y| x - y)?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_with(self.value(b), "mul", |x, y| x * y)?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a), "add_scalar")
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), "matmul")
    }

    /// Adds `bias[n]` to every row of `x[m, n]`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb != [sx[1]] {
            return Err(self.shape_err("add_row_bias", x, bias));
        }
        let n = sx[1];
        let b = self.value(bias).data().to_vec();
        let mut v = self.value(x).clone();
        for row in v.data_mut().chunks_mut(n) {
            row.iter_mut().zip(&b).for_each(|(y, bb)| *y += bb);
        }
        self.push(v, Op::AddRowBias(x, bias), "add_row_bias")
    }

    /// Adds `bias[c]` to channel `c` of `x[batch, c, h, w]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 4 || sb != [sx[1]] {
            return Err(self.shape_err("add_channel_bias", x, bias));
        }
        let (c, hw) = (sx[1], sx[2] * sx[3]);
        let b = self.value(bias).data().to_vec();
        let mut v = self.value(x).clone();
        for (i, plane) in v.data_mut().chunks_mut(hw).enumerate() {
            let bb = b[i % c];
            plane.iter_mut().for_each(|y| *y += bb);
        }
        self.push(v, Op::AddChannelBias(x, bias), "add_channel_bias")
    }

    /// 2-D convolution, `input[b, ci, h, w]` with `kernel[co, ci, kh, kw]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (si, sk) = (self.shape(input), self.shape(kernel));
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] || stride == 0 {
            return Err(self.shape_err("conv2d", input, kernel));
        }
        let (batch, ci, h, w) = (si[0], si[1], si[2], si[3]);
        let (co, kh, kw) = (sk[0], sk[2], sk[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(self.shape_err("conv2d", input, kernel));
        }
        let win = Window {
            channels: ci,
            h,
            w,
            kh,
            kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        };
        let (rows, ncols) = (win.col_rows(), win.col_cols());
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let mut out = vec![0.0; batch * co * ncols];
        let mut cols = vec![0.0; rows * ncols];
        for b in 0..batch {
            im2col(&x[b * ci * h * w..(b + 1) * ci * h * w], &win, &mut cols);
            gemm(co, rows, ncols, k, false, &cols, false, &mut out[b * co * ncols..(b + 1) * co * ncols], 0.0);
        }
        let value = Tensor::new(vec![batch, co, win.out_h, win.out_w], out)?;
        self.push(value, Op::Conv2d { input, kernel, stride, padding }, "conv2d")
    }

    /// Transposed 2-D convolution (the adjoint of [`Graph::conv2d`]),
    /// `input[b, ci, h, w]` with `kernel[ci, co, kh, kw]`; output side is
    /// `(h - 1)·stride - 2·padding + kh`.
    pub fn conv_transpose2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (si, sk) = (self.shape(input), self.shape(kernel));
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[0] || stride == 0 {
            return Err(self.shape_err("conv_transpose2d", input, kernel));
        }
        let (batch, ci, h, w) = (si[0], si[1], si[2], si[3]);
        let (co, kh, kw) = (sk[1], sk[2], sk[3]);
        let full_h = (h.max(1) - 1) * stride + kh;
        let full_w = (w.max(1) - 1) * stride + kw;
        if h == 0 || w == 0 || full_h <= 2 * padding || full_w <= 2 * padding {
            return Err(self.shape_err("conv_transpose2d", input, kernel));
        }
        let win = Window {
            channels: co,
            h: full_h - 2 * padding,
            w: full_w - 2 * padding,
            kh,
            kw,
            stride,
            padding,
            out_h: h,
            out_w: w,
        };
        let (rows, ncols) = (win.col_rows(), win.col_cols());
        let out_len = co * win.h * win.w;
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let mut out = vec![0.0; batch * out_len];
        let mut cols = vec![0.0; rows * ncols];
        for b in 0..batch {
            gemm(rows, ci, ncols, k, true, &x[b * ci * ncols..(b + 1) * ci * ncols], false, &mut cols, 0.0);
            col2im(&cols, &win, &mut out[b * out_len..(b + 1) * out_len]);
        }
        let value = Tensor::new(vec![batch, co, win.h, win.w], out)?;
        self.push(value, Op::ConvTranspose2d { input, kernel, stride, padding }, "conv_transpose2d")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a), "softplus")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), "square")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        self.push(v, Op::Reshape(a), "reshape")
    }

    /// Concatenates along axis 1; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat"))?;
        let s0 = self.shape(first).to_vec();
        if s0.len() < 2 {
            return Err(self.shape_err("concat", first, first));
        }
        let batch = s0[0];
        let inner: usize = s0[2..].iter().product();
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != s0.len() || s[0] != batch || s[2..] != s0[2..] {
                return Err(self.shape_err("concat", first, p));
            }
            width += s[1];
        }
        let mut data = Vec::with_capacity(batch * width * inner);
        for b in 0..batch {
            for &p in parts {
                let chunk = self.shape(p)[1] * inner;
                data.extend_from_slice(&self.value(p).data()[b * chunk..(b + 1) * chunk]);
            }
        }
        let mut shape = s0;
        shape[1] = width;
        self.push(Tensor::new(shape, data)?, Op::Concat(parts.to_vec()), "concat")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        if self.value(a).is_empty() {
            return Err(Error::Empty("mean"));
        }
        let v = Tensor::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a), "mean")
    }

    /// Mean softmax cross-entropy of `logits[batch, classes]` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::Shape { op: "softmax_cross_entropy", left: s.to_vec(), right: vec![labels.len()] });
        }
        let classes = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
        }
        let z = self.value(logits).data();
        let mut total = 0.0;
        for (row, &label) in z.chunks(classes).zip(labels) {
            total += log_sum_exp(row) - row[label];
        }
        let v = Tensor::scalar(total / labels.len() as f64);
        self.push(v, Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec() }, "softmax_cross_entropy")
    }

    /// Gradients of the scalar `loss` with respect to every node.
    fn backward(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { node: format!("grad of {}#{idx}", node.label) });
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.iter().copied());
                accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.iter().copied());
                accumulate(grads, *b, g.iter().map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate(grads, *a, g.iter().zip(vb).map(|(g, y)| g * y));
                accumulate(grads, *b, g.iter().zip(va).map(|(g, x)| g * x));
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.iter().map(|x| x * s)),
            Op::AddScalar(a) => accumulate(grads, *a, g.iter().copied()),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, false, val(*b), true, &mut ga, 0.0);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, val(*a), true, g, false, &mut gb, 0.0);
                accumulate(grads, *a, ga.into_iter());
                accumulate(grads, *b, gb.into_iter());
            }
            Op::AddRowBias(x, bias) => {
                let n = self.shape(*bias)[0];
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
                }
                accumulate(grads, *x, g.iter().copied());
                accumulate(grads, *bias, gb.into_iter());
            }
            Op::AddChannelBias(x, bias) => {
                let s = self.shape(*x);
                let (c, hw) = (s[1], s[2] * s[3]);
                let mut gb = vec![0.0; c];
                for (i, plane) in g.chunks(hw).enumerate() {
                    gb[i % c] += plane.iter().sum::<f64>();
                }
                accumulate(grads, *x, g.iter().copied());
                accumulate(grads, *bias, gb.into_iter());
            }
            Op::Conv2d { input, kernel, stride, padding } => {
                let (si, sk) = (self.shape(*input), self.shape(*kernel));
                let (batch, ci, h, w) = (si[0], si[1], si[2], si[3]);
                let (co, kh, kw) = (sk[0], sk[2], sk[3]);
                let so = node.value.shape();
                let win = Window {
                    channels: ci,
                    h,
                    w,
                    kh,
                    kw,
                    stride: *stride,
                    padding: *padding,
                    out_h: so[2],
                    out_w: so[3],
                };
                let (rows, ncols) = (win.col_rows(), win.col_cols());
                let (x, k) = (val(*input), val(*kernel));
                let mut gx = vec![0.0; x.len()];
                let mut gk = vec![0.0; k.len()];
                let mut cols = vec![0.0; rows * ncols];
                let mut gcols = vec![0.0; rows * ncols];
                let img = ci * h * w;
                for b in 0..batch {
                    let gout = &g[b * co * ncols..(b + 1) * co * ncols];
                    im2col(&x[b * img..(b + 1) * img], &win, &mut cols);
                    gemm(co, ncols, rows, gout, false, &cols, true, &mut gk, 1.0);
                    gemm(rows, co, ncols, k, true, gout, false, &mut gcols, 0.0);
                    col2im(&gcols, &win, &mut gx[b * img..(b + 1) * img]);
                }
                accumulate(grads, *input, gx.into_iter());
                accumulate(grads, *kernel, gk.into_iter());
            }
            Op::ConvTranspose2d { input, kernel, stride, padding } => {
                let (si, sk) = (self.shape(*input), self.shape(*kernel));
                let (batch, ci, h, w) = (si[0], si[1], si[2], si[3]);
                let (co, kh, kw) = (sk[1], sk[2], sk[3]);
                let so = node.value.shape();
                let win = Window {
                    channels: co,
                    h: so[2],
                    w: so[3],
                    kh,
                    kw,
                    stride: *stride,
                    padding: *padding,
                    out_h: h,
                    out_w: w,
                };
                let (rows, ncols) = (win.col_rows(), win.col_cols());
                let out_len = co * so[2] * so[3];
                let (x, k) = (val(*input), val(*kernel));
                let mut gx = vec![0.0; x.len()];
                let mut gk = vec![0.0; k.len()];
                let mut gcols = vec![0.0; rows * ncols];
                for b in 0..batch {
                    im2col(&g[b * out_len..(b + 1) * out_len], &win, &mut gcols);
                    let xb = &x[b * ci * ncols..(b + 1) * ci * ncols];
                    gemm(ci, rows, ncols, k, false, &gcols, false, &mut gx[b * ci * ncols..(b + 1) * ci * ncols], 0.0);
                    gemm(ci, ncols, rows, xb, false, &gcols, true, &mut gk, 1.0);
                }
                accumulate(grads, *input, gx.into_iter());
                accumulate(grads, *kernel, gk.into_iter());
            }
            Op::Relu(a) => {
                let x = val(*a);
                accumulate(grads, *a, g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }));
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a);
                accumulate(grads, *a, g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { g * slope }));
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                accumulate(grads, *a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)));
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                accumulate(grads, *a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)));
            }
            Op::Softplus(a) => {
                let x = val(*a);
                accumulate(grads, *a, g.iter().zip(x).map(|(g, &x)| g * sigmoid(x)));
            }
            Op::Square(a) => {
                let x = val(*a);
                accumulate(grads, *a, g.iter().zip(x).map(|(g, x)| 2.0 * g * x));
            }
            Op::Reshape(a) => accumulate(grads, *a, g.iter().copied()),
            Op::Concat(parts) => {
                let s = node.value.shape();
                let batch = s[0];
                let inner: usize = s[2..].iter().product();
                let row = s[1] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.shape(p)[1] * inner;
                    let part = (0..batch).flat_map(|b| g[b * row + offset..b * row + offset + chunk].iter().copied());
                    accumulate(grads, p, part);
                    offset += chunk;
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                accumulate(grads, *a, std::iter::repeat_n(g[0], n));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                accumulate(grads, *a, std::iter::repeat_n(g[0] / n as f64, n));
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let classes = self.shape(*logits)[1];
                let scale = g[0] / labels.len() as f64;
                let mut gl = Vec::with_capacity(classes * labels.len());
                for (row, &label) in val(*logits).chunks(classes).zip(labels) {
                    let lse = log_sum_exp(row);
                    for (j, &z) in row.iter().enumerate() {
                        let p = (z - lse).exp();
                        gl.push(scale * (p - if j == label { 1.0 } else { 0.0 }));
                    }
                }
                accumulate(grads, *logits, gl.into_iter());
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: impl Iterator<Item = f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, x)| *a += x),
        slot @ None => *slot = Some(g.collect()),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Gradient of `loss` with respect to `params`, in the set's order.
///
/// Parameters that the graph never touched get zero gradients; a parameter
/// registered more than once gets the sum over its leaves.
pub fn grad(graph: &Graph, loss: Var, params: &ParamSet) -> Result<ParamSet> {
    let grads = graph.backward(loss)?;
    let mut entries = Vec::with_capacity(params.len());
    for (name, value) in params.iter() {
        let mut acc = vec![0.0; value.len()];
        for (_, v) in graph.params.iter().filter(|(n, _)| n == name) {
            if graph.value(*v).shape() != value.shape() {
                return Err(Error::Shape {
                    op: "grad",
                    left: graph.value(*v).shape().to_vec(),
                    right: value.shape().to_vec(),
                });
            }
            if let Some(Some(g)) = grads.get(v.0) {
                acc.iter_mut().zip(g).for_each(|(a, x)| *a += x);
            }
        }
        entries.push((name.to_string(), Tensor::new(value.shape().to_vec(), acc)?));
    }
    ParamSet::new(entries)
}
