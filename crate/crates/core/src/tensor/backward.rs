use super::kernels::{self, axis_extents};
use super::Tensor;
use crate::scalar::Scalar;

/// Recorded operation together with whatever the backward rule needs beyond
/// the inputs and output themselves.
pub(crate) enum Op<T: Scalar> {
    MatMul {
        shared: bool,
    },
    Add,
    Sub,
    Mul,
    Scale(T),
    BroadcastAdd,
    TransposeLastTwo,
    Reshape,
    ConcatLast {
        widths: Vec<usize>,
    },
    Slice {
        axis: usize,
        start: usize,
        end: usize,
    },
    MeanAxis(usize),
    SumAxis(usize),
    Softmax,
    LayerNorm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu,
    Relu,
    Tanh,
    Square,
    Sqrt,
}

type Grads<T> = Vec<Option<Vec<T>>>;

fn wants<T: Scalar>(t: &Tensor<T>) -> bool {
    t.requires_grad()
}

fn elementwise<T: Scalar>(x: &Tensor<T>, g: &[T], f: impl Fn(T, T) -> T) -> Grads<T> {
    vec![Some(
        x.data().iter().zip(g).map(|(&v, &gv)| f(v, gv)).collect(),
    )]
}

impl<T: Scalar> Op<T> {
    /// Vector-Jacobian products for each input given the upstream gradient `g`
    /// of `out`. Inputs that do not require gradients may get `None`.
    pub(crate) fn backward(&self, out: &Tensor<T>, inputs: &[Tensor<T>], g: &[T]) -> Grads<T> {
        match self {
            Op::MatMul { shared } => matmul_backward(&inputs[0], &inputs[1], g, *shared),
            Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
            Op::Mul => {
                let (a, b) = (&inputs[0], &inputs[1]);
                let ga =
                    wants(a).then(|| g.iter().zip(b.data()).map(|(&gv, &bv)| gv * bv).collect());
                let gb =
                    wants(b).then(|| g.iter().zip(a.data()).map(|(&gv, &av)| gv * av).collect());
                vec![ga, gb]
            }
            Op::Scale(s) => vec![Some(g.iter().map(|&v| v * *s).collect())],
            Op::BroadcastAdd => {
                let bias = &inputs[1];
                let gb = wants(bias).then(|| {
                    let block = bias.numel().max(1);
                    let mut acc = vec![T::zero(); block];
                    for chunk in g.chunks(block) {
                        acc.iter_mut().zip(chunk).for_each(|(a, &v)| *a += v);
                    }
                    acc
                });
                vec![Some(g.to_vec()), gb]
            }
            Op::TransposeLastTwo => {
                // out has shape [.., cols, rows]; transposing back restores the input layout
                let s = out.shape();
                let (rows, cols) = (s[s.len() - 2], s[s.len() - 1]);
                let batch = out.numel() / (rows * cols).max(1);
                vec![Some(kernels::transpose_last_two(g, batch, rows, cols))]
            }
            Op::Reshape => vec![Some(g.to_vec())],
            Op::ConcatLast { widths } => {
                let total: usize = widths.iter().sum();
                let rows = g.len() / total.max(1);
                let mut grads: Vec<Vec<T>> = widths
                    .iter()
                    .map(|&w| Vec::with_capacity(rows * w))
                    .collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (dst, &w) in grads.iter_mut().zip(widths) {
                        dst.extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                grads.into_iter().map(Some).collect()
            }
            Op::Slice { axis, start, end } => {
                let x = &inputs[0];
                let (outer, len, inner) = axis_extents(x.shape(), *axis);
                let width = end - start;
                let mut gx = vec![T::zero(); x.numel()];
                for o in 0..outer {
                    let src = &g[o * width * inner..(o + 1) * width * inner];
                    let base = o * len * inner + start * inner;
                    gx[base..base + width * inner].copy_from_slice(src);
                }
                vec![Some(gx)]
            }
            Op::MeanAxis(axis) | Op::SumAxis(axis) => {
                let x = &inputs[0];
                let (outer, len, inner) = axis_extents(x.shape(), *axis);
                let factor = match self {
                    Op::MeanAxis(_) => T::one() / T::of(len as f64),
                    _ => T::one(),
                };
                let mut gx = vec![T::zero(); x.numel()];
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for a in 0..len {
                        let dst = &mut gx[(o * len + a) * inner..(o * len + a + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s * factor);
                    }
                }
                vec![Some(gx)]
            }
            Op::Softmax => {
                let d = *out.shape().last().expect("softmax output has rank >= 1");
                let mut gx = vec![T::zero(); g.len()];
                for ((gx_row, y), gy) in gx.chunks_mut(d).zip(out.data().chunks(d)).zip(g.chunks(d))
                {
                    let dot: T = y.iter().zip(gy).map(|(&a, &b)| a * b).sum();
                    for ((dst, &yv), &gv) in gx_row.iter_mut().zip(y).zip(gy) {
                        *dst = yv * (gv - dot);
                    }
                }
                vec![Some(gx)]
            }
            Op::LayerNorm { xhat, inv_std } => layer_norm_backward(inputs, xhat, inv_std, g),
            Op::Gelu => elementwise(&inputs[0], g, |x, gv| gv * kernels::gelu_parts(x).1),
            Op::Relu => elementwise(
                &inputs[0],
                g,
                |x, gv| if x > T::zero() { gv } else { T::zero() },
            ),
            Op::Tanh => vec![Some(
                out.data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gv)| gv * (T::one() - y * y))
                    .collect(),
            )],
            Op::Square => elementwise(&inputs[0], g, |x, gv| gv * (x + x)),
            Op::Sqrt => vec![Some(
                out.data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gv)| gv / (y + y))
                    .collect(),
            )],
        }
    }
}

fn matmul_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, g: &[T], shared: bool) -> Grads<T> {
    let sa = a.shape();
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let n = b.shape()[b.rank() - 1];
    let batch = a.numel() / (m * k).max(1);
    let ga = wants(a).then(|| {
        let mut ga = vec![T::zero(); a.numel()];
        if shared {
            kernels::gemm_nt(g, b.data(), &mut ga, batch * m, n, k);
        } else {
            for i in 0..batch {
                kernels::gemm_nt(
                    &g[i * m * n..(i + 1) * m * n],
                    &b.data()[i * k * n..(i + 1) * k * n],
                    &mut ga[i * m * k..(i + 1) * m * k],
                    m,
                    n,
                    k,
                );
            }
        }
        ga
    });
    let gb = wants(b).then(|| {
        let mut gb = vec![T::zero(); b.numel()];
        if shared {
            kernels::gemm_tn(a.data(), g, &mut gb, batch * m, k, n);
        } else {
            for i in 0..batch {
                kernels::gemm_tn(
                    &a.data()[i * m * k..(i + 1) * m * k],
                    &g[i * m * n..(i + 1) * m * n],
                    &mut gb[i * k * n..(i + 1) * k * n],
                    m,
                    k,
                    n,
                );
            }
        }
        gb
    });
    vec![ga, gb]
}

fn layer_norm_backward<T: Scalar>(
    inputs: &[Tensor<T>],
    xhat: &[T],
    inv_std: &[T],
    g: &[T],
) -> Grads<T> {
    let d = xhat.len() / inv_std.len();
    let n = T::of(d as f64);
    let affine = inputs.len() == 3;
    let gain = affine.then(|| inputs[1].data());
    let mut gx = vec![T::zero(); xhat.len()];
    let mut g_gain = vec![T::zero(); d];
    let mut g_bias = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for (r, &is) in inv_std.iter().enumerate() {
        let xr = &xhat[r * d..(r + 1) * d];
        let gr = &g[r * d..(r + 1) * d];
        for j in 0..d {
            dxhat[j] = match gain {
                Some(gain) => gr[j] * gain[j],
                None => gr[j],
            };
            if affine {
                g_gain[j] += gr[j] * xr[j];
                g_bias[j] += gr[j];
            }
        }
        let mean_d: T = dxhat.iter().copied().sum::<T>() / n;
        let mean_dx: T = dxhat.iter().zip(xr).map(|(&a, &b)| a * b).sum::<T>() / n;
        for j in 0..d {
            gx[r * d + j] = is * (dxhat[j] - mean_d - xr[j] * mean_dx);
        }
    }
    if affine {
        vec![Some(gx), Some(g_gain), Some(g_bias)]
    } else {
        vec![Some(gx)]
    }
}
