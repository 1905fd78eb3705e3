//! Named parameter traversal and initialization helpers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything that owns trainable tensors under canonical dotted names.
pub trait Parameters<T: Scalar> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);

    fn named_parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    /// Total number of scalar parameters.
    fn parameter_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.numel()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Scalar> Parameters<T> for Tensor<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((prefix.to_string(), self));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((prefix.to_string(), self));
    }
}

macro_rules! impl_parameters {
    ($ty:ident { $($field:ident),+ $(,)? }) => {
        impl<T: $crate::scalar::Scalar> $crate::params::Parameters<T> for $ty<T> {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a $crate::tensor::Tensor<T>)>) {
                $( self.$field.collect(&$crate::params::join(prefix, stringify!($field)), out); )+
            }

            fn collect_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut Vec<(String, &'a mut $crate::tensor::Tensor<T>)>,
            ) {
                $( self.$field.collect_mut(&$crate::params::join(prefix, stringify!($field)), out); )+
            }
        }
    };
}
pub(crate) use impl_parameters;

/// Uniform Glorot initialization for a `fan_in × fan_out` weight.
pub(crate) fn glorot<T: Scalar>(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
) -> Result<Tensor<T>> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::of(rng.random_range(-limit..limit)))
        .collect();
    Tensor::parameter(data, &[fan_in, fan_out])
}

pub(crate) fn normal<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    std: f64,
) -> Result<Tensor<T>> {
    let dist = Normal::new(0.0, std).expect("positive standard deviation");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::parameter(data, shape)
}

pub(crate) fn constant<T: Scalar>(shape: &[usize], value: f64) -> Result<Tensor<T>> {
    let n = shape.iter().product();
    Tensor::parameter(vec![T::of(value); n], shape)
}

/// Affine map `x · W + b` over the last axis.
#[derive(Debug, Clone)]
pub struct Linear<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl_parameters!(Linear { weight, bias });

impl<T: Scalar> Linear<T> {
    pub fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Self {
            weight: glorot(rng, fan_in, fan_out)?,
            bias: constant(&[fan_out], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.matmul(&self.weight)?.broadcast_add(&self.bias)
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Copy of `model` with the parameter called `name` swapped for `value`.
#[cfg(test)]
pub(crate) fn replaced<T: Scalar, M: Parameters<T> + Clone>(
    model: &M,
    name: &str,
    value: &Tensor<T>,
) -> M {
    let mut out = model.clone();
    for (n, t) in out.named_parameters_mut() {
        if n == name {
            *t = value.clone();
        }
    }
    out
}

/// Gradient check of `loss(model)` against every parameter in turn.
#[cfg(test)]
pub(crate) fn check_all_parameters<M: Parameters<f64> + Clone>(
    model: &M,
    loss: impl Fn(&M) -> Result<Tensor<f64>>,
) -> Vec<(String, f64)> {
    model
        .named_parameters()
        .into_iter()
        .map(|(name, t)| {
            let err =
                crate::tensor::grad_check(|x| loss(&replaced(model, &name, x)), t, 1e-5).unwrap();
            (name, err)
        })
        .collect()
}
