use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t(data: &[f64], shape: &[usize]) -> Tensor<f64> {
    Tensor::from_f64(data, shape).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = numel(shape);
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(data, shape).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn matmul_identity_is_exact() {
    let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    let i = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
    assert_eq!(a.matmul(&i).unwrap().data(), a.data());
}

#[test]
fn matmul_identity_bit_exact_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, &[5, 7], -3.0, 3.0);
    let mut eye = vec![0.0; 49];
    (0..7).for_each(|i| eye[i * 7 + i] = 1.0);
    let eye = Tensor::new(eye, &[7, 7]).unwrap();
    assert_eq!(a.matmul(&eye).unwrap().data(), a.data());
}

#[test]
fn matmul_shape_errors_name_both_shapes() {
    let a = Tensor::<f64>::zeros(&[2, 3]);
    let b = Tensor::<f64>::zeros(&[2, 3]);
    let err = a.matmul(&b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
}

#[test]
fn batched_matmul_matches_per_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&mut rng, &[3, 2, 4], -1.0, 1.0);
    let b = random(&mut rng, &[3, 4, 5], -1.0, 1.0);
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.shape(), &[3, 2, 5]);
    for i in 0..3 {
        let ai = a.slice(0, i, i + 1).unwrap().reshape(&[2, 4]).unwrap();
        let bi = b.slice(0, i, i + 1).unwrap().reshape(&[4, 5]).unwrap();
        let ci = ai.matmul(&bi).unwrap();
        assert_eq!(ci.data(), &c.data()[i * 10..(i + 1) * 10]);
    }
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let s = t(&[0.0, 0.0], &[2]).softmax_last_dim().unwrap();
    close(s.data(), &[0.5, 0.5], 1e-15);
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[6, 5], -20.0, 20.0);
    let s = x.softmax_last_dim().unwrap();
    for row in s.data().chunks(5) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let shifted = Tensor::new(x.data().iter().map(|v| v + 7.5).collect(), x.shape()).unwrap();
    close(shifted.softmax_last_dim().unwrap().data(), s.data(), 1e-9);
}

#[test]
fn layer_norm_two_values() {
    let y = t(&[1.0, 3.0], &[2]).layer_norm().unwrap();
    // variance 1, so the eps perturbation is 1/sqrt(1 + 1e-5)
    let s = 1.0 / (1.0f64 + 1e-5).sqrt();
    close(y.data(), &[-s, s], 1e-15);
    close(y.data(), &[-1.0, 1.0], 1e-5);
}

#[test]
fn gelu_uses_tanh_form() {
    let y = t(&[1.0], &[1]).gelu();
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let expected = 0.5 * (1.0 + (c * (1.0 + 0.044715)).tanh());
    assert!((y.data()[0] - expected).abs() < 1e-15);
}

#[test]
fn backward_sum_of_squares() {
    let x = Tensor::parameter(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    x.square().sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad_vec().unwrap(), vec![2.0, 4.0, 6.0]);
}

#[test]
fn backward_through_aliased_fan_out() {
    let a = Tensor::parameter(vec![1.0], &[1]).unwrap();
    a.mul(&a).unwrap().sum_all().unwrap().backward().unwrap();
    assert_eq!(a.grad_vec().unwrap(), vec![2.0]);
}

#[test]
fn backward_rejects_non_scalar_root() {
    let x = Tensor::parameter(vec![1.0, 2.0], &[2]).unwrap();
    assert!(x.square().backward().is_err());
}

#[test]
fn backward_accumulates_until_zeroed() {
    let x = Tensor::parameter(vec![1.5], &[1]).unwrap();
    for _ in 0..2 {
        x.square().sum_all().unwrap().backward().unwrap();
    }
    assert_eq!(x.grad_vec().unwrap(), vec![6.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn constants_never_accumulate_grad() {
    let c = t(&[1.0, 2.0], &[2]);
    let x = Tensor::parameter(vec![3.0, 4.0], &[2]).unwrap();
    x.mul(&c).unwrap().sum_all().unwrap().backward().unwrap();
    assert!(c.grad().is_none());
    assert_eq!(x.grad_vec().unwrap(), vec![1.0, 2.0]);
}

#[test]
fn unreachable_leaves_untouched() {
    let x = Tensor::parameter(vec![1.0], &[1]).unwrap();
    let y = Tensor::parameter(vec![2.0], &[1]).unwrap();
    let _unused = y.square();
    x.square().sum_all().unwrap().backward().unwrap();
    assert!(y.grad().is_none());
}

#[test]
fn no_grad_records_nothing() {
    let x = Tensor::parameter(vec![1.0], &[1]).unwrap();
    let y = no_grad(|| x.square());
    assert!(!y.requires_grad());
    assert!(x.square().requires_grad());
}

#[test]
fn concat_backward_has_no_cross_talk() {
    let grad_of_a = |b_values: &[f64]| {
        let a = Tensor::parameter(vec![0.3, -0.2, 0.9, 1.1], &[2, 2]).unwrap();
        let b = Tensor::parameter(b_values.to_vec(), &[2, 1]).unwrap();
        let c = Tensor::concat_last_dim(&[&a, &b]).unwrap();
        c.square().sum_all().unwrap().backward().unwrap();
        a.grad_vec().unwrap()
    };
    assert_eq!(grad_of_a(&[1.0, 2.0]), grad_of_a(&[-7.0, 40.0]));
}

#[test]
fn grad_check_linear_is_exact() {
    // dyadic inputs and a power-of-two step keep every difference exact
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..12)
        .map(|_| rng.random_range(-64i32..64) as f64 / 16.0)
        .collect();
    let x = t(&data, &[4, 3]);
    let err = grad_check(|x| x.sum_all(), &x, 2f64.powi(-10)).unwrap();
    assert!(err < 1e-12, "{err}");
    // at the default step the only error left is cancellation in the difference
    let err = grad_check(|x| x.sum_all(), &x, 1e-5).unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn grad_check_softmax_sum_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&mut rng, &[3, 4], -2.0, 2.0);
    let err = grad_check(|x| x.softmax_last_dim()?.sum_all(), &x, 1e-5).unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn grad_check_rejects_non_finite_and_bad_step() {
    let x = t(&[-1.0], &[1]);
    assert!(grad_check(|x| x.sqrt().sum_all(), &x, 1e-5).is_err());
    assert!(grad_check(|x| x.sum_all(), &x, 1e-2).is_err());
}

/// Contracts an op output against fixed random weights so the check exercises
/// a non-trivial upstream gradient.
fn weighted_sum(y: &Tensor<f64>, seed: u64) -> crate::error::Result<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = random(&mut rng, y.shape(), -1.0, 1.0);
    y.mul(&w)?.sum_all()
}

#[test]
fn every_op_kind_passes_grad_check() {
    for seed in 0..10u64 {
        for (kind, err) in super::gradcheck::suite::run_all(seed) {
            assert!(err < 1e-4, "{kind} seed {seed}: {err}");
        }
    }
}

#[test]
fn weighted_sum_helper_is_differentiable() {
    let x = t(&[1.0, 2.0], &[2]);
    let err = grad_check(|x| weighted_sum(&x.square(), 1), &x, 1e-5).unwrap();
    assert!(err < 1e-6);
}
