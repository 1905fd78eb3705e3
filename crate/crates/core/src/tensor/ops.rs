use super::backward::Op;
use super::kernels::{self, axis_extents};
use super::{numel, Tensor};
use crate::error::{shape_mismatch, Error, Result};
use crate::scalar::Scalar;

/// Layer-norm variance stabilizer.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// The closed set of differentiable operations.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    ScalarMul(f64),
    TransposeLastTwo,
    Reshape(Vec<usize>),
    ConcatLastDim,
    Slice {
        axis: usize,
        start: usize,
        end: usize,
    },
    MeanAxis(usize),
    SumAxis(usize),
    SoftmaxLastDim,
    LayerNormLastDim,
    Gelu,
    Relu,
    Tanh,
    Square,
    Sqrt,
    BroadcastAdd,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::ScalarMul(_) => "scalar-mul",
            OpKind::TransposeLastTwo => "transpose-last-two",
            OpKind::Reshape(_) => "reshape",
            OpKind::ConcatLastDim => "concat-last-dim",
            OpKind::Slice { .. } => "slice",
            OpKind::MeanAxis(_) => "mean-over-axis",
            OpKind::SumAxis(_) => "sum-over-axis",
            OpKind::SoftmaxLastDim => "softmax-last-dim",
            OpKind::LayerNormLastDim => "layer-norm-last-dim",
            OpKind::Gelu => "gelu",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::BroadcastAdd => "broadcast-add",
        }
    }
}

/// Applies `kind` to `inputs`. Unary kinds take one input, binary kinds two,
/// concat any positive number, and layer-norm either one input or three
/// (`x`, gain, bias).
pub fn forward_op<T: Scalar>(kind: &OpKind, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let arity = |n: usize| -> Result<()> {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} expects {n} inputs, got {}",
                kind.name(),
                inputs.len()
            )))
        }
    };
    match kind {
        OpKind::MatMul => {
            arity(2)?;
            inputs[0].matmul(inputs[1])
        }
        OpKind::Add => {
            arity(2)?;
            inputs[0].add(inputs[1])
        }
        OpKind::Sub => {
            arity(2)?;
            inputs[0].sub(inputs[1])
        }
        OpKind::Mul => {
            arity(2)?;
            inputs[0].mul(inputs[1])
        }
        OpKind::BroadcastAdd => {
            arity(2)?;
            inputs[0].broadcast_add(inputs[1])
        }
        OpKind::ScalarMul(s) => {
            arity(1)?;
            Ok(inputs[0].scale(T::of(*s)))
        }
        OpKind::TransposeLastTwo => {
            arity(1)?;
            inputs[0].transpose_last_two()
        }
        OpKind::Reshape(shape) => {
            arity(1)?;
            inputs[0].reshape(shape)
        }
        OpKind::ConcatLastDim => Tensor::concat_last_dim(inputs),
        OpKind::Slice { axis, start, end } => {
            arity(1)?;
            inputs[0].slice(*axis, *start, *end)
        }
        OpKind::MeanAxis(axis) => {
            arity(1)?;
            inputs[0].mean_axis(*axis)
        }
        OpKind::SumAxis(axis) => {
            arity(1)?;
            inputs[0].sum_axis(*axis)
        }
        OpKind::SoftmaxLastDim => {
            arity(1)?;
            inputs[0].softmax_last_dim()
        }
        OpKind::LayerNormLastDim => match inputs {
            [x] => x.layer_norm(),
            [x, g, b] => x.layer_norm_affine(g, b),
            _ => Err(Error::InvalidArgument(format!(
                "layer-norm-last-dim expects 1 or 3 inputs, got {}",
                inputs.len()
            ))),
        },
        OpKind::Gelu => {
            arity(1)?;
            Ok(inputs[0].gelu())
        }
        OpKind::Relu => {
            arity(1)?;
            Ok(inputs[0].relu())
        }
        OpKind::Tanh => {
            arity(1)?;
            Ok(inputs[0].tanh())
        }
        OpKind::Square => {
            arity(1)?;
            Ok(inputs[0].square())
        }
        OpKind::Sqrt => {
            arity(1)?;
            Ok(inputs[0].sqrt())
        }
    }
}

impl<T: Scalar> Tensor<T> {
    fn last_two(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "{op} needs rank >= 2, got shape {s:?}"
            )));
        }
        let rows = s[s.len() - 2];
        let cols = s[s.len() - 1];
        Ok((numel(&s[..s.len() - 2]), rows, cols))
    }

    /// Matrix product over the last two axes.
    ///
    /// A rank-2 right operand is shared by every leading index of `self`
    /// (`[.., m, k] · [k, n]`); otherwise both operands must carry identical
    /// leading axes and the product is taken per batch entry.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, m, k) = self.last_two("matmul")?;
        let (rhs_batch, k2, n) = rhs.last_two("matmul")?;
        let mismatch = || shape_mismatch("matmul", self.shape(), rhs.shape());
        if k != k2 {
            return Err(mismatch());
        }
        let mut shape = self.shape()[..self.rank() - 2].to_vec();
        shape.extend([m, n]);
        let mut out = vec![T::zero(); batch * m * n];
        if rhs.rank() == 2 {
            kernels::gemm_nn(self.data(), rhs.data(), &mut out, batch * m, k, n);
            return Ok(Tensor::from_op(
                out,
                shape,
                Op::MatMul { shared: true },
                &[self, rhs],
            ));
        }
        if self.shape()[..self.rank() - 2] != rhs.shape()[..rhs.rank() - 2] {
            return Err(mismatch());
        }
        debug_assert_eq!(batch, rhs_batch);
        for b in 0..batch {
            kernels::gemm_nn(
                &self.data()[b * m * k..(b + 1) * m * k],
                &rhs.data()[b * k * n..(b + 1) * k * n],
                &mut out[b * m * n..(b + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(Tensor::from_op(
            out,
            shape,
            Op::MatMul { shared: false },
            &[self, rhs],
        ))
    }

    fn zip_same(
        &self,
        rhs: &Tensor<T>,
        op_name: &'static str,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        if self.shape() != rhs.shape() {
            return Err(shape_mismatch(op_name, self.shape(), rhs.shape()));
        }
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            op,
            &[self, rhs],
        ))
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_same(rhs, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_same(rhs, "sub", Op::Sub, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_same(rhs, "mul", Op::Mul, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v * s).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Scale(s), &[self])
    }

    /// Adds `rhs` to every trailing block of `self`; `rhs.shape()` must be a
    /// suffix of `self.shape()` (a bias vector, a positional table, ...).
    pub fn broadcast_add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (s, r) = (self.shape(), rhs.shape());
        if r.len() > s.len() || s[s.len() - r.len()..] != *r {
            return Err(shape_mismatch("broadcast-add", s, r));
        }
        let block = rhs.numel().max(1);
        let mut data = self.to_vec();
        for chunk in data.chunks_mut(block) {
            for (v, &b) in chunk.iter_mut().zip(rhs.data()) {
                *v += b;
            }
        }
        Ok(Tensor::from_op(
            data,
            s.to_vec(),
            Op::BroadcastAdd,
            &[self, rhs],
        ))
    }

    pub fn transpose_last_two(&self) -> Result<Tensor<T>> {
        let (batch, rows, cols) = self.last_two("transpose-last-two")?;
        let data = kernels::transpose_last_two(self.data(), batch, rows, cols);
        let mut shape = self.shape().to_vec();
        let r = shape.len();
        shape.swap(r - 1, r - 2);
        Ok(Tensor::from_op(data, shape, Op::TransposeLastTwo, &[self]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(shape_mismatch("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            Op::Reshape,
            &[self],
        ))
    }

    pub fn concat_last_dim(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat-last-dim of zero tensors".into()))?;
        if first.rank() == 0 {
            return Err(Error::InvalidArgument("concat-last-dim on a scalar".into()));
        }
        let lead = &first.shape()[..first.rank() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            if p.rank() != first.rank() || &p.shape()[..p.rank() - 1] != lead {
                return Err(shape_mismatch("concat-last-dim", first.shape(), p.shape()));
            }
            widths.push(p.shape()[p.rank() - 1]);
        }
        let rows = numel(lead);
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(Tensor::from_op(
            data,
            shape,
            Op::ConcatLast { widths },
            parts,
        ))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() || start >= end || end > self.shape()[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {end}) on axis {axis} of shape {:?}",
                self.shape()
            )));
        }
        let (outer, len, inner) = axis_extents(self.shape(), axis);
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * len * inner;
            data.extend_from_slice(&self.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = width;
        Ok(Tensor::from_op(
            data,
            shape,
            Op::Slice { axis, start, end },
            &[self],
        ))
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::InvalidArgument(format!(
                "reduction axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let (outer, len, inner) = axis_extents(self.shape(), axis);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &self.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, &s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if mean {
            let n = T::of(len as f64);
            data.iter_mut().for_each(|v| *v /= n);
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let op = if mean {
            Op::MeanAxis(axis)
        } else {
            Op::SumAxis(axis)
        };
        Ok(Tensor::from_op(data, shape, op, &[self]))
    }

    /// Mean over `axis`; the axis is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<T>> {
        self.reduce_axis(axis, true)
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<T>> {
        self.reduce_axis(axis, false)
    }

    /// Mean over every element, as a rank-0 tensor.
    pub fn mean_all(&self) -> Result<Tensor<T>> {
        self.reshape(&[self.numel()])?.mean_axis(0)
    }

    pub fn sum_all(&self) -> Result<Tensor<T>> {
        self.reshape(&[self.numel()])?.sum_axis(0)
    }

    fn last_dim(&self, op: &'static str) -> Result<usize> {
        match self.shape().last() {
            Some(&d) if d > 0 => Ok(d),
            _ => Err(Error::InvalidArgument(format!(
                "{op} on shape {:?}",
                self.shape()
            ))),
        }
    }

    pub fn softmax_last_dim(&self) -> Result<Tensor<T>> {
        let d = self.last_dim("softmax-last-dim")?;
        let mut data = self.to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::Softmax,
            &[self],
        ))
    }

    fn normalize_rows(&self) -> Result<(Vec<T>, Vec<T>, usize)> {
        let d = self.last_dim("layer-norm-last-dim")?;
        let eps = T::of(LAYER_NORM_EPS);
        let n = T::of(d as f64);
        let mut xhat = self.to_vec();
        let mut inv_std = Vec::with_capacity(self.numel() / d);
        for row in xhat.chunks_mut(d) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        Ok((xhat, inv_std, d))
    }

    /// Normalizes each last-axis row to zero mean and unit (biased) variance.
    pub fn layer_norm(&self) -> Result<Tensor<T>> {
        let (xhat, inv_std, _) = self.normalize_rows()?;
        Ok(Tensor::from_op(
            xhat.clone(),
            self.shape().to_vec(),
            Op::LayerNorm { xhat, inv_std },
            &[self],
        ))
    }

    /// Layer norm followed by a per-feature gain and bias.
    pub fn layer_norm_affine(&self, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, inv_std, d) = self.normalize_rows()?;
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(shape_mismatch(
                "layer-norm-last-dim",
                gain.shape(),
                bias.shape(),
            ));
        }
        let mut data = xhat.clone();
        for row in data.chunks_mut(d) {
            for ((v, &g), &b) in row.iter_mut().zip(gain.data()).zip(bias.data()) {
                *v = *v * g + b;
            }
        }
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            Op::LayerNorm { xhat, inv_std },
            &[self, gain, bias],
        ))
    }

    fn map(&self, op: Op<T>, f: impl Fn(T) -> T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| f(v)).collect();
        Tensor::from_op(data, self.shape().to_vec(), op, &[self])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self) -> Tensor<T> {
        self.map(Op::Gelu, |v| kernels::gelu_parts(v).0)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.map(Op::Relu, |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.map(Op::Tanh, |v| v.tanh())
    }

    pub fn square(&self) -> Tensor<T> {
        self.map(Op::Square, |v| v * v)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.map(Op::Sqrt, |v| v.sqrt())
    }
}
