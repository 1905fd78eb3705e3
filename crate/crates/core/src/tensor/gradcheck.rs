use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compares autodiff against central finite differences.
///
/// `f` is evaluated on a fresh parameter copy of `x`. Returns the maximum over
/// coordinates of `|autodiff - fd| / max(1, |fd|)`.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, step: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {step} outside (0, 1e-3]"
        )));
    }
    let checked = |t: &Tensor<T>| -> Result<Tensor<T>> {
        let y = f(t)?;
        if y.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "grad_check needs a scalar function, got shape {:?}",
                y.shape()
            )));
        }
        if !y.all_finite() {
            return Err(Error::NonFinite("grad_check function value".into()));
        }
        Ok(y)
    };
    let eval = |values: Vec<T>| -> Result<T> { checked(&Tensor::new(values, x.shape())?)?.item() };

    let base = x.to_vec();
    let probe = Tensor::parameter(base.clone(), x.shape())?;
    let y = checked(&probe)?;
    let analytic = if y.requires_grad() {
        y.backward()?;
        probe
            .grad_vec()
            .unwrap_or_else(|| vec![T::zero(); base.len()])
    } else {
        vec![T::zero(); base.len()]
    };

    let h = T::of(step);
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = eval(plus)?;
        let fm = eval(minus)?;
        let fd = ((fp - fm) / (h + h)).to_f64_lossy();
        let ad = analytic[i].to_f64_lossy();
        let err = (ad - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Random-input gradient checks for every [`OpKind`](super::OpKind).
pub mod suite {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::grad_check;
    use crate::error::Result;
    use crate::tensor::{forward_op, numel, OpKind, Tensor};

    const STEP: f64 = 1e-5;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let data = (0..numel(shape))
            .map(|_| rng.random_range(lo..hi))
            .collect();
        Tensor::new(data, shape).expect("shape matches data")
    }

    /// Values bounded away from zero, for ops with a kink at the origin.
    fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let data = (0..numel(shape))
            .map(|_| {
                let m = rng.random_range(0.1..2.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        Tensor::new(data, shape).expect("shape matches data")
    }

    fn dim(rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(1..=8)
    }

    /// Checks `kind` with respect to each input in turn, holding the others
    /// fixed; the op output is contracted with random weights.
    fn check(kind: &OpKind, inputs: &[Tensor<f64>], rng: &mut ChaCha8Rng) -> Result<f64> {
        let out_shape = {
            let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
            forward_op(kind, &refs)?.shape().to_vec()
        };
        let weights = random(rng, &out_shape, -1.0, 1.0);
        let mut worst = 0.0f64;
        for i in 0..inputs.len() {
            let err = grad_check(
                |x| {
                    let refs: Vec<&Tensor<f64>> = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, t)| if j == i { x } else { t })
                        .collect();
                    forward_op(kind, &refs)?.mul(&weights)?.sum_all()
                },
                &inputs[i],
                STEP,
            )?;
            worst = worst.max(err);
        }
        Ok(worst)
    }

    /// Maximum relative gradient error per op kind for one seed.
    pub fn run_all(seed: u64) -> Vec<(&'static str, f64)> {
        try_run_all(seed).expect("gradient suite inputs are well-formed")
    }

    pub fn try_run_all(seed: u64) -> Result<Vec<(&'static str, f64)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        let mut cases: Vec<(OpKind, Vec<Tensor<f64>>)> = Vec::new();

        let (m, k, n) = (dim(r), dim(r), dim(r));
        cases.push((
            OpKind::MatMul,
            vec![random(r, &[m, k], -1.0, 1.0), random(r, &[k, n], -1.0, 1.0)],
        ));
        let b = dim(r).min(3);
        cases.push((
            OpKind::MatMul,
            vec![
                random(r, &[b, m, k], -1.0, 1.0),
                random(r, &[b, k, n], -1.0, 1.0),
            ],
        ));
        let shape = [dim(r), dim(r)];
        for kind in [OpKind::Add, OpKind::Sub, OpKind::Mul] {
            cases.push((
                kind,
                vec![random(r, &shape, -2.0, 2.0), random(r, &shape, -2.0, 2.0)],
            ));
        }
        cases.push((OpKind::ScalarMul(1.7), vec![random(r, &shape, -2.0, 2.0)]));
        let s3 = [dim(r).min(3), dim(r), dim(r)];
        cases.push((OpKind::TransposeLastTwo, vec![random(r, &s3, -2.0, 2.0)]));
        cases.push((
            OpKind::Reshape(vec![numel(&s3)]),
            vec![random(r, &s3, -2.0, 2.0)],
        ));
        let (rows, w1, w2) = (dim(r), dim(r), dim(r));
        cases.push((
            OpKind::ConcatLastDim,
            vec![
                random(r, &[rows, w1], -2.0, 2.0),
                random(r, &[rows, w2], -2.0, 2.0),
            ],
        ));
        let axis = r.random_range(0..3);
        let len = s3[axis];
        let start = r.random_range(0..len);
        let end = r.random_range(start + 1..=len);
        cases.push((
            OpKind::Slice { axis, start, end },
            vec![random(r, &s3, -2.0, 2.0)],
        ));
        let axis = r.random_range(0..3);
        cases.push((OpKind::MeanAxis(axis), vec![random(r, &s3, -2.0, 2.0)]));
        cases.push((OpKind::SumAxis(axis), vec![random(r, &s3, -2.0, 2.0)]));
        cases.push((OpKind::SoftmaxLastDim, vec![random(r, &s3, -3.0, 3.0)]));
        let d = dim(r).max(2);
        let ln_shape = [dim(r), d];
        cases.push((
            OpKind::LayerNormLastDim,
            vec![random(r, &ln_shape, -2.0, 2.0)],
        ));
        cases.push((
            OpKind::LayerNormLastDim,
            vec![
                random(r, &ln_shape, -2.0, 2.0),
                random(r, &[d], 0.5, 1.5),
                random(r, &[d], -0.5, 0.5),
            ],
        ));
        cases.push((OpKind::Gelu, vec![random(r, &shape, -3.0, 3.0)]));
        cases.push((OpKind::Relu, vec![away_from_zero(r, &shape)]));
        cases.push((OpKind::Tanh, vec![random(r, &shape, -2.0, 2.0)]));
        cases.push((OpKind::Square, vec![random(r, &shape, -2.0, 2.0)]));
        cases.push((OpKind::Sqrt, vec![random(r, &shape, 0.5, 2.0)]));
        cases.push((
            OpKind::BroadcastAdd,
            vec![random(r, &s3, -2.0, 2.0), random(r, &s3[1..], -2.0, 2.0)],
        ));

        let mut out = Vec::with_capacity(cases.len());
        for (kind, inputs) in &cases {
            out.push((kind.name(), check(kind, inputs, r)?));
        }
        Ok(out)
    }
}
