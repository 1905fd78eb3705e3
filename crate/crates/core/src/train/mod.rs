//! AdamW, cosine annealing, early stopping and evaluation.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::{mse_loss, target_tensor, Forecaster};
use crate::params::Parameters;
use crate::preprocessing::WindowSet;
use crate::scalar::Scalar;
use crate::tensor::{no_grad, Tensor};

mod record;

pub use record::{parse_key_values, RunResult, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Keep only the first `n` training windows.
    pub max_train_windows: Option<usize>,
    /// Keep only the first `n` validation and test windows.
    pub max_eval_windows: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
            max_train_windows: None,
            max_eval_windows: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid training config {self:?}"
            )))
        }
    }
}

/// `0.5 · lr · (1 + cos(π · epoch / max_epochs))`.
pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let e = epoch.min(cfg.max_epochs) as f64;
    0.5 * cfg.lr * (1.0 + (PI * e / cfg.max_epochs as f64).cos())
}

/// One AdamW update of a single tensor's values, in place.
///
/// `t` is the 1-based global step.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: f64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let one = T::one();
    let decay = one - T::of(lr * cfg.weight_decay);
    let c1 = one - T::of(cfg.beta1.powi(t as i32));
    let c2 = one - T::of(cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::of(lr), T::of(cfg.adam_eps));
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] = theta[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Optimizer state for every parameter of one model, in traversal order.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(model: &impl Parameters<T>) -> Self {
        let zeros: Vec<Vec<T>> = model
            .named_parameters()
            .iter()
            .map(|(_, t)| vec![T::zero(); t.numel()])
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies accumulated gradients and replaces every parameter with a fresh
    /// leaf, which also clears the gradients.
    pub fn step(
        &mut self,
        model: &mut impl Parameters<T>,
        lr: f64,
        cfg: &TrainConfig,
    ) -> Result<()> {
        self.step += 1;
        for (i, (name, param)) in model.named_parameters_mut().into_iter().enumerate() {
            let grad = param
                .grad_vec()
                .unwrap_or_else(|| vec![T::zero(); param.numel()]);
            if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {name}[{j}] at step {}",
                    self.step
                )));
            }
            let mut theta = param.to_vec();
            adamw_step(
                &mut theta,
                &grad,
                &mut self.m[i],
                &mut self.v[i],
                self.step,
                lr,
                cfg,
            );
            *param = Tensor::parameter(theta, param.shape())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
}

/// MAE and MSE over every horizon step of every window.
pub fn evaluate<T: Scalar>(
    model: &impl Forecaster<T>,
    windows: &WindowSet<'_>,
    batch_size: usize,
) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset("no windows to evaluate".into()));
    }
    no_grad(|| {
        let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
        for batch in windows.batches(batch_size) {
            let pred = model.forward(&batch)?;
            for (p, y) in pred.data().iter().zip(&batch.target_future) {
                let e = p.to_f64_lossy() - y;
                abs += e.abs();
                sq += e * e;
            }
            n += batch.target_future.len();
        }
        if !(abs.is_finite() && sq.is_finite()) {
            return Err(Error::NonFinite("evaluation error".into()));
        }
        Ok(Metrics {
            mae: abs / n as f64,
            mse: sq / n as f64,
        })
    })
}

/// Train, validation and test windows of one task.
pub struct TaskWindows<'a> {
    pub train: WindowSet<'a>,
    pub val: WindowSet<'a>,
    pub test: WindowSet<'a>,
}

/// What happened during one call to [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test: Metrics,
}

/// Permutation of `0..n` for one epoch, keyed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains `model` in place, restores the parameters of the best validation
/// epoch and evaluates them on the test windows.
pub fn train<T, M>(model: &mut M, task: &TaskWindows<'_>, cfg: &TrainConfig) -> Result<TrainOutcome>
where
    T: Scalar,
    M: Forecaster<T> + Clone,
{
    cfg.validate()?;
    let mut train_set = task.train.clone();
    let mut val_set = task.val.clone();
    let mut test_set = task.test.clone();
    if let Some(n) = cfg.max_train_windows {
        train_set.truncate(n);
    }
    if let Some(n) = cfg.max_eval_windows {
        val_set.truncate(n);
        test_set.truncate(n);
    }
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("no training windows".into()));
    }

    let mut opt = AdamW::new(model);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(epoch, cfg);
        let order = epoch_order(train_set.len(), cfg.seed, epoch);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.batch(chunk);
            let diverged = |loss: f64| Error::Diverged {
                epoch: epoch + 1,
                batch: b,
                loss,
            };
            let loss = match model.forward(&batch) {
                Ok(pred) => mse_loss(&pred, &target_tensor(&batch)?)?,
                Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            let value = loss.item()?.to_f64_lossy();
            if !value.is_finite() {
                return Err(diverged(value));
            }
            loss.backward()?;
            match opt.step(model, lr, cfg) {
                Err(Error::NonFinite(_)) => return Err(diverged(value)),
                other => other?,
            }
            total += value * chunk.len() as f64;
        }
        train_losses.push(total / train_set.len() as f64);

        let val = evaluate(model, &val_set, cfg.batch_size)?.mse;
        val_losses.push(val);
        if val < best_val {
            best_val = val;
            best_epoch = epoch + 1;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    *model = best;
    let test = evaluate(model, &test_set, cfg.batch_size)?;
    Ok(TrainOutcome {
        train_losses,
        val_losses,
        best_epoch,
        best_val_mse: best_val,
        test,
    })
}

#[cfg(test)]
mod tests;
