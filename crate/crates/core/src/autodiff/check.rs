//! Finite-difference validation of reverse-mode gradients.

use ndarray::ArrayD;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor};
use crate::error::{Error, Result};

/// Settings for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Max probed coordinates per input; inputs at most this large are
    /// probed exhaustively.
    pub max_coords_per_input: usize,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            max_coords_per_input: 40,
            seed: 0,
        }
    }
}

fn eval<F>(f: &F, inputs: &[ArrayD<f64>]) -> f64
where
    F: for<'g> Fn(&'g Graph, &[Tensor<'g>]) -> Tensor<'g>,
{
    let g = Graph::new();
    let leaves: Vec<_> = inputs.iter().map(|x| g.leaf(x.clone(), false)).collect();
    let out = f(&g, &leaves);
    let v = out.value();
    assert!(v.len() == 1, "grad_check requires a scalar function");
    v.iter().next().copied().unwrap()
}

/// Compare reverse-mode gradients of a scalar-valued `f` against central
/// finite differences on a sampled subset of input coordinates.
///
/// Returns the largest relative error
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)` over all
/// probes. `f` must be deterministic; this is verified by evaluating it
/// twice and requiring bit-identical outputs.
pub fn grad_check<F>(f: F, inputs: &[ArrayD<f64>], cfg: GradCheckConfig) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Tensor<'g>]) -> Tensor<'g>,
{
    let base = eval(&f, inputs);
    if eval(&f, inputs).to_bits() != base.to_bits() {
        return Err(Error::InvalidArgument(
            "grad_check requires a deterministic function (two evaluations differed)".into(),
        ));
    }

    let analytic: Vec<ArrayD<f64>> = {
        let g = Graph::new();
        let leaves: Vec<_> = inputs.iter().map(|x| g.leaf(x.clone(), true)).collect();
        let out = f(&g, &leaves);
        g.backward(out)?;
        leaves
            .iter()
            .zip(inputs)
            .map(|(t, x)| {
                g.grad(*t)
                    .map(|a| a.as_standard_layout().into_owned())
                    .unwrap_or_else(|| ArrayD::zeros(x.raw_dim()))
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let n = x.len();
        if n == 0 {
            continue;
        }
        let coords: Vec<usize> = if n <= cfg.max_coords_per_input {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.max_coords_per_input).into_vec()
        };
        for c in coords {
            let mut plus = inputs.to_vec();
            plus[i].as_slice_mut().unwrap()[c] += cfg.eps;
            let mut minus = inputs.to_vec();
            minus[i].as_slice_mut().unwrap()[c] -= cfg.eps;
            let numeric = (eval(&f, &plus) - eval(&f, &minus)) / (2.0 * cfg.eps);
            let a = analytic[i].as_slice().unwrap()[c];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn quadratic_gradient_matches() {
        let x = arr1(&[0.5, -1.5, 2.0]).into_dyn();
        let err = grad_check(
            |_, t| (t[0] * t[0]).sum(0),
            &[x],
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn zero_gradient_function_passes() {
        // f(x) = sum(x · 0): analytic and numeric both zero everywhere.
        let x = arr1(&[1.0, 2.0]).into_dyn();
        let err = grad_check(
            |g, t| (t[0] * g.scalar(0.0)).sum(0),
            &[x],
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn matmul_chain_checks_out() {
        let a = arr2(&[[0.3, -0.7], [1.1, 0.2]]).into_dyn();
        let b = arr2(&[[0.9, 0.1], [-0.4, 0.8]]).into_dyn();
        let err = grad_check(
            |_, t| t[0].matmul(t[1]).tanh().sum(1).sum(0),
            &[a, b],
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }
}
