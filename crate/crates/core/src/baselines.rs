//! DLinear (target history only) and a flatten-everything MLP.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::{denormalize, gather_inputs, Forecaster};
use crate::params::{impl_parameters, Linear, Parameters};
use crate::preprocessing::WindowBatch;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MOVING_AVG_KERNEL: usize = 25;
pub const MLP_HIDDEN: usize = 512;

/// Splits `x` into a centered moving average and the remainder. The ends are
/// padded by repeating the first and last values.
pub fn decompose<T: Scalar>(x: &[T], kernel: usize) -> Result<(Vec<T>, Vec<T>)> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "moving-average kernel {kernel} must be odd"
        )));
    }
    if x.is_empty() {
        return Err(Error::TooShort {
            required: 1,
            available: 0,
        });
    }
    let half = kernel / 2;
    let n = x.len() as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    let k = T::of(kernel as f64);
    let trend: Vec<T> = (0..n)
        .map(|t| (t - half as isize..=t + half as isize).map(at).sum::<T>() / k)
        .collect();
    let remainder = x.iter().zip(&trend).map(|(&v, &m)| v - m).collect();
    Ok((trend, remainder))
}

#[derive(Debug, Clone)]
pub struct DLinear<T: Scalar> {
    pub trend: Linear<T>,
    pub seasonal: Linear<T>,
    pub kernel: usize,
    pub context_len: usize,
    pub revin: bool,
}

impl<T: Scalar> Parameters<T> for DLinear<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.trend
            .collect(&crate::params::join(prefix, "trend"), out);
        self.seasonal
            .collect(&crate::params::join(prefix, "seasonal"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.trend
            .collect_mut(&crate::params::join(prefix, "trend"), out);
        self.seasonal
            .collect_mut(&crate::params::join(prefix, "seasonal"), out);
    }
}

impl<T: Scalar> DLinear<T> {
    pub fn init(
        rng: &mut ChaCha8Rng,
        context_len: usize,
        horizon: usize,
        revin: bool,
    ) -> Result<Self> {
        if context_len == 0 || horizon == 0 {
            return Err(Error::InvalidArgument(
                "context length and horizon must be positive".into(),
            ));
        }
        Ok(Self {
            trend: Linear::glorot(rng, context_len, horizon)?,
            seasonal: Linear::glorot(rng, context_len, horizon)?,
            kernel: MOVING_AVG_KERNEL,
            context_len,
            revin,
        })
    }
}

impl<T: Scalar> Forecaster<T> for DLinear<T> {
    fn forward(&self, batch: &WindowBatch) -> Result<Tensor<T>> {
        if batch.context_len != self.context_len {
            return Err(Error::InvalidArgument(format!(
                "model expects context length {}, got {}",
                self.context_len, batch.context_len
            )));
        }
        let inputs = gather_inputs::<T>(batch, &[batch.target_channel], self.revin)?;
        let mut trend = Vec::with_capacity(batch.batch * self.context_len);
        let mut remainder = Vec::with_capacity(batch.batch * self.context_len);
        for per in &inputs.series {
            let (t, r) = decompose(&per[0], self.kernel)?;
            trend.extend(t);
            remainder.extend(r);
        }
        let shape = [batch.batch, self.context_len];
        let y = self
            .trend
            .forward(&Tensor::new(trend, &shape)?)?
            .add(&self.seasonal.forward(&Tensor::new(remainder, &shape)?)?)?;
        denormalize(&y, inputs.target_stats.as_deref())
    }

    fn horizon(&self) -> usize {
        self.trend.out_features()
    }
}

/// Channel-dependent baseline over the flattened `context_len × n_vars` window.
#[derive(Debug, Clone)]
pub struct MlpBaseline<T: Scalar> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub out: Linear<T>,
    pub context_len: usize,
    pub n_vars: usize,
    pub revin: bool,
}

impl_parameters!(MlpBaseline { fc1, fc2, out });

impl<T: Scalar> MlpBaseline<T> {
    pub fn init(
        rng: &mut ChaCha8Rng,
        context_len: usize,
        n_vars: usize,
        horizon: usize,
        revin: bool,
    ) -> Result<Self> {
        Self::with_hidden(rng, context_len, n_vars, horizon, MLP_HIDDEN, revin)
    }

    pub fn with_hidden(
        rng: &mut ChaCha8Rng,
        context_len: usize,
        n_vars: usize,
        horizon: usize,
        hidden: usize,
        revin: bool,
    ) -> Result<Self> {
        if context_len == 0 || n_vars == 0 || horizon == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "mlp dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            fc1: Linear::glorot(rng, context_len * n_vars, hidden)?,
            fc2: Linear::glorot(rng, hidden, hidden)?,
            out: Linear::glorot(rng, hidden, horizon)?,
            context_len,
            n_vars,
            revin,
        })
    }
}

impl<T: Scalar> Forecaster<T> for MlpBaseline<T> {
    fn forward(&self, batch: &WindowBatch) -> Result<Tensor<T>> {
        if batch.n_vars != self.n_vars || batch.context_len != self.context_len {
            return Err(Error::InvalidArgument(format!(
                "mlp built for {}x{} windows, got {}x{}",
                self.context_len, self.n_vars, batch.context_len, batch.n_vars
            )));
        }
        let channels: Vec<usize> = (0..self.n_vars).collect();
        let inputs = gather_inputs::<T>(batch, &channels, self.revin)?;
        let mut flat = Vec::with_capacity(batch.batch * self.context_len * self.n_vars);
        for per in &inputs.series {
            for t in 0..self.context_len {
                flat.extend(per.iter().map(|s| s[t]));
            }
        }
        let x = Tensor::new(flat, &[batch.batch, self.context_len * self.n_vars])?;
        let h = self.fc2.forward(&self.fc1.forward(&x)?.relu())?.relu();
        denormalize(&self.out.forward(&h)?, inputs.target_stats.as_deref())
    }

    fn horizon(&self) -> usize {
        self.out.out_features()
    }
}
