use super::*;
use crate::causal::CausalGraph;
use crate::data::Split;
use crate::data::{ChannelRole, SplitBorders, TimeSeriesDataset};
use crate::params::impl_parameters;
use crate::preprocessing::{make_windows, WindowBatch, WindowSpec};

/// Forecasts the same learnable constant for every step.
#[derive(Debug, Clone)]
struct Constant<T: Scalar> {
    c: Tensor<T>,
}

impl_parameters!(Constant { c });

impl<T: Scalar> Forecaster<T> for Constant<T> {
    fn forward(&self, batch: &WindowBatch) -> Result<Tensor<T>> {
        Tensor::zeros(&[batch.batch, batch.horizon]).broadcast_add(&self.c)
    }

    fn horizon(&self) -> usize {
        self.c.numel()
    }
}

fn constant(c: f64, horizon: usize) -> Constant<f64> {
    Constant {
        c: Tensor::parameter(vec![c; horizon], &[horizon]).unwrap(),
    }
}

/// One channel that equals `train_value` on the training rows and
/// `val_value` afterwards.
fn step_dataset(train_value: f64, val_value: f64) -> TimeSeriesDataset {
    let values: Vec<f64> = (0..60)
        .map(|t| if t < 30 { train_value } else { val_value })
        .collect();
    TimeSeriesDataset::new(
        "step",
        values,
        vec!["y".into()],
        vec![ChannelRole::Target],
        0,
        CausalGraph::absent(),
    )
    .unwrap()
    .with_splits(SplitBorders {
        train: 0..30,
        val: 30..45,
        test: 45..60,
    })
    .unwrap()
}

fn task(ds: &TimeSeriesDataset) -> TaskWindows<'_> {
    let spec = WindowSpec {
        context_len: 4,
        horizon: 2,
        target: 0,
        context_channels: vec![],
    };
    TaskWindows {
        train: make_windows(ds, Split::Train, &spec).unwrap(),
        val: make_windows(ds, Split::Val, &spec).unwrap(),
        test: make_windows(ds, Split::Test, &spec).unwrap(),
    }
}

#[test]
fn cosine_boundaries() {
    let cfg = TrainConfig::default();
    assert_eq!(cosine_lr(0, &cfg), 1e-3);
    assert!((cosine_lr(50, &cfg) - 5e-4).abs() < 1e-18);
    assert_eq!(cosine_lr(100, &cfg), 0.0);
    assert!(cosine_lr(25, &cfg) > cosine_lr(26, &cfg));
}

#[test]
fn decay_only_step() {
    let cfg = TrainConfig::default();
    let mut theta = vec![2.0f64, -4.0];
    let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
    adamw_step(&mut theta, &[0.0, 0.0], &mut m, &mut v, 1, 1e-3, &cfg);
    assert_eq!(theta, vec![2.0 * (1.0 - 1e-5), -4.0 * (1.0 - 1e-5)]);
}

#[test]
fn first_step_moves_by_lr() {
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut theta = vec![0.5f64];
    let (mut m, mut v) = (vec![0.0], vec![0.0]);
    adamw_step(&mut theta, &[1.0], &mut m, &mut v, 1, 1e-3, &cfg);
    assert!((theta[0] - (0.5 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
}

/// Textbook AdamW written against scalars with the bias corrections folded
/// into the step size.
fn reference_adamw(
    theta0: &[f64],
    grad: impl Fn(&[f64]) -> Vec<f64>,
    steps: usize,
    lr: f64,
) -> Vec<f64> {
    let (b1, b2, eps, wd) = (0.9f64, 0.999f64, 1e-8, 0.01);
    let mut theta = theta0.to_vec();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    for t in 1..=steps {
        let g = grad(&theta);
        for i in 0..theta.len() {
            theta[i] -= lr * wd * theta[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let bc1 = 1.0 - b1.powi(t as i32);
            let bc2 = 1.0 - b2.powi(t as i32);
            let denom = v[i].sqrt() / bc2.sqrt() + eps;
            theta[i] -= lr / bc1 * m[i] / denom;
        }
    }
    theta
}

#[test]
fn adamw_matches_reference_on_quadratic() {
    let a = [3.0, 0.5, 1.5];
    let target = [1.0, -2.0, 0.25];
    let grad = |x: &[f64]| {
        (0..3)
            .map(|i| 2.0 * a[i] * (x[i] - target[i]))
            .collect::<Vec<_>>()
    };
    let theta0 = [0.0, 1.0, -1.0];
    let lr = 0.05;
    let expect = reference_adamw(&theta0, grad, 100, lr);

    let cfg = TrainConfig::default();
    let mut model = Constant::<f64> {
        c: Tensor::parameter(theta0.to_vec(), &[3]).unwrap(),
    };
    let weights = Tensor::new(a.to_vec(), &[3]).unwrap();
    let shift = Tensor::new(target.to_vec(), &[3]).unwrap();
    let mut opt = AdamW::new(&model);
    for _ in 0..100 {
        let loss = model
            .c
            .sub(&shift)
            .unwrap()
            .square()
            .mul(&weights)
            .unwrap()
            .sum_all()
            .unwrap();
        loss.backward().unwrap();
        opt.step(&mut model, lr, &cfg).unwrap();
    }
    assert_eq!(opt.steps_taken(), 100);
    for (got, want) in model.c.data().iter().zip(&expect) {
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn evaluation_metrics() {
    let ds = step_dataset(2.0, 2.0);
    let t = task(&ds);
    let exact = evaluate(&constant(2.0, 2), &t.test, 3).unwrap();
    assert_eq!((exact.mae, exact.mse), (0.0, 0.0));
    let off = evaluate(&constant(3.0, 2), &t.test, 3).unwrap();
    assert_eq!((off.mae, off.mse), (1.0, 1.0));
    let mut empty = t.test.clone();
    empty.truncate(0);
    assert!(matches!(
        evaluate(&constant(3.0, 2), &empty, 3),
        Err(Error::EmptyDataset(_))
    ));
}

#[test]
fn perfect_model_stops_after_patience() {
    let ds = step_dataset(0.0, 0.0);
    let mut model = constant(0.0, 2);
    let out = train(&mut model, &task(&ds), &TrainConfig::default()).unwrap();
    assert_eq!(out.val_losses.len(), 11);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.test.mse, 0.0);
}

#[test]
fn worsening_validation_restores_first_epoch() {
    for patience in [3, 10] {
        let ds = step_dataset(0.0, 1.0);
        let cfg = TrainConfig {
            patience,
            lr: 0.02,
            ..TrainConfig::default()
        };
        let mut model = constant(0.5, 2);
        let out = train(&mut model, &task(&ds), &cfg).unwrap();
        assert_eq!(out.val_losses.len(), 1 + patience);
        assert_eq!(out.best_epoch, 1);
        assert!(out.val_losses.windows(2).all(|w| w[1] > w[0]));
        assert!(out.val_losses.iter().all(|&v| v >= out.best_val_mse));
        let restored = evaluate(&model, &task(&ds).val, 256).unwrap().mse;
        assert_eq!(restored, out.val_losses[0]);
    }
}

#[test]
fn divergence_names_epoch_and_batch() {
    let ds = step_dataset(0.0, 0.0);
    let mut model = constant(1e200, 2);
    let err = train(&mut model, &task(&ds), &TrainConfig::default()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Diverged {
                epoch: 1,
                batch: 0,
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn shuffles_are_keyed_by_seed_and_epoch() {
    let a = epoch_order(50, 7, 0);
    assert_eq!(a, epoch_order(50, 7, 0));
    assert_ne!(a, epoch_order(50, 7, 1));
    assert_ne!(a, epoch_order(50, 8, 0));
    let mut sorted = a.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
}

#[test]
fn config_validation() {
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}
