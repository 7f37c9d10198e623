//! Finite-difference checks for every autodiff primitive.

use eegdec::autodiff::{grad_check, Graph, GradCheckConfig, Tensor};
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-7;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            // Box-Muller keeps us off rand_distr for one helper.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

fn check<F>(name: &str, f: F, inputs: &[ArrayD<f64>])
where
    F: for<'g> Fn(&'g Graph, &[Tensor<'g>]) -> Tensor<'g>,
{
    let err = grad_check(f, inputs, GradCheckConfig::default()).unwrap();
    assert!(err < TOL, "{name}: relative error {err} >= {TOL}");
}

#[test]
fn add_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = randn(&mut rng, &[3, 4]);
    let b = randn(&mut rng, &[4]);
    check("add", |_, t| (t[0] + t[1]).sum(1).sum(0), &[a, b]);
}

#[test]
fn sub_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = randn(&mut rng, &[3, 4]);
    let b = randn(&mut rng, &[3, 1]);
    check("sub", |_, t| (t[0] - t[1]).sum(1).sum(0), &[a, b]);
}

#[test]
fn mul_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = randn(&mut rng, &[2, 3, 4]);
    let b = randn(&mut rng, &[3, 4]);
    check(
        "mul",
        |_, t| (t[0] * t[1]).sum(2).sum(1).sum(0),
        &[a, b],
    );
}

#[test]
fn matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = randn(&mut rng, &[5, 7]);
    let b = randn(&mut rng, &[7, 3]);
    // Weight the output so the gradient is not all-ones.
    let w = randn(&mut rng, &[5, 3]);
    check(
        "matmul",
        move |g, t| {
            let w = g.constant(w.clone());
            (t[0].matmul(t[1]) * w).sum(1).sum(0)
        },
        &[a, b],
    );
}

#[test]
fn concat_and_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = randn(&mut rng, &[2, 3]);
    let b = randn(&mut rng, &[2, 5]);
    check(
        "concat+slice",
        |g, t| {
            let c = g.concat(&[t[0], t[1]], 1);
            let s = c.slice(1, 2, 4); // spans the a/b boundary
            (s * s).sum(1).sum(0)
        },
        &[a, b],
    );
}

#[test]
fn reshape_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = randn(&mut rng, &[4, 6]);
    check(
        "reshape+transpose",
        |_, t| {
            let r = t[0].reshape(&[8, 3]).t();
            (r * r).sum(1).sum(0)
        },
        &[a],
    );
}

#[test]
fn reduce_mean_and_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = randn(&mut rng, &[3, 4, 5]);
    check(
        "mean+sum",
        |_, t| (t[0].mean(1) * t[0].sum(1)).sum(1).sum(0),
        &[a],
    );
}

#[test]
fn sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = randn(&mut rng, &[6, 6]);
    check("sigmoid", |_, t| t[0].sigmoid().sum(1).sum(0), &[a]);
}

#[test]
fn tanh() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = randn(&mut rng, &[6, 6]);
    check("tanh", |_, t| t[0].tanh().sum(1).sum(0), &[a]);
}

#[test]
fn tanh_chain_depth_10() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = randn(&mut rng, &[4]);
    check(
        "tanh^10",
        |_, t| {
            let mut x = t[0];
            for _ in 0..10 {
                x = x.tanh();
            }
            x.sum(0)
        },
        &[a],
    );
}

#[test]
fn elu_both_regimes() {
    // Values straddle zero but stay eps away so central differences
    // never cross the kink.
    let a = ArrayD::from_shape_vec(
        IxDyn(&[6]),
        vec![-2.0, -0.5, -0.01, 0.01, 0.5, 2.0],
    )
    .unwrap();
    check("elu", |_, t| t[0].elu(1.0).sum(0), &[a]);
}

#[test]
fn exp_log() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = randn(&mut rng, &[5]).mapv(|v| v.abs() + 0.5);
    check("exp+log", |_, t| (t[0].log().exp() * t[0]).sum(0), &[a]);
}

#[test]
fn softmax_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = randn(&mut rng, &[4, 3]);
    let w = randn(&mut rng, &[4, 3]);
    check(
        "softmax",
        move |g, t| {
            let w = g.constant(w.clone());
            (t[0].softmax(1) * w).sum(1).sum(0)
        },
        &[a],
    );
}

#[test]
fn matmul_alone_is_tighter() {
    // Bilinear in its inputs, so central differences are exact up to
    // rounding; hold this primitive to a stricter bound.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = randn(&mut rng, &[4, 4]);
    let b = randn(&mut rng, &[4, 4]);
    let err = grad_check(
        |_, t| t[0].matmul(t[1]).sum(1).sum(0),
        &[a, b],
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(err < 1e-9, "matmul relative error {err}");
}
