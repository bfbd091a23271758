//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{backward, forward, forward_tape};
use super::params::ParamSet;
use super::spec::NetSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PROJECTION_SEED: u64 = 0x6a09_e667;

/// `|analytic - numeric| / max(1, |analytic|)`, maximized over entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`.
pub fn finite_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let plus = f(&probe);
            probe[i] = orig - eps;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    Ok(())
}

/// Fixed pseudo-random weights turning the net output into a scalar loss `sum(r * y)`.
fn projection(dims: &[usize]) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn projected_loss(net: &NetSpec, params: &ParamSet<f64>, input: &Tensor<f64>, r: &Tensor<f64>) -> Result<f64> {
    let y = forward(net, params, input)?;
    Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
}

/// Maximum relative error between backprop parameter gradients and central differences
/// of a fixed random projection of the net output.
pub fn grad_check(net: &NetSpec, params: &ParamSet<f64>, input: &Tensor<f64>, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let r = projection(&net.output_shape());
    let mut work = params.clone();
    work.zero_grad();
    let tape = forward_tape(net, &work, input)?;
    backward(net, &mut work, &tape, &r, false)?;
    let mut worst = 0.0f64;
    for pi in 0..work.len() {
        let analytic = work.params()[pi].grad.data().to_vec();
        let x0 = work.params()[pi].value.data().to_vec();
        let mut probe = work.clone();
        let mut err = None;
        let numeric = finite_difference(
            |x| {
                probe.params_mut()[pi].value.data_mut().copy_from_slice(x);
                match projected_loss(net, &probe, input, &r) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        f64::NAN
                    }
                }
            },
            &x0,
            eps,
        );
        if let Some(e) = err {
            return Err(e);
        }
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Same check for the gradient with respect to the net input.
pub fn input_grad_check(net: &NetSpec, params: &ParamSet<f64>, input: &Tensor<f64>, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let r = projection(&net.output_shape());
    let mut work = params.clone();
    let tape = forward_tape(net, &work, input)?;
    let analytic = backward(net, &mut work, &tape, &r, true)?.expect("input grad requested");
    let mut probe = input.clone();
    let numeric = finite_difference(
        |x| {
            probe.data_mut().copy_from_slice(x);
            projected_loss(net, params, &probe, &r).unwrap_or(f64::NAN)
        },
        input.data(),
        eps,
    );
    Ok(max_relative_error(analytic.data(), &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Param;
    use crate::nn::spec::Layer;

    #[test]
    fn rejects_bad_eps() {
        let net = NetSpec::new(vec![1, 1, 1], vec![Layer::conv2d(1, 1, 1, 0)]).unwrap();
        let params = ParamSet::init(&net, 0);
        assert!(grad_check(&net, &params, &Tensor::zeros(&[1, 1, 1]), 1e-2).is_err());
    }

    #[test]
    fn quadratic_scalar_net_is_exact() {
        // conv(w) -> conv(w): y = w^2 x, a quadratic in w.
        let net = NetSpec::new(
            vec![1, 1, 1],
            vec![Layer::conv2d(1, 1, 1, 0), Layer::conv2d(1, 1, 1, 0)],
        )
        .unwrap();
        let params = ParamSet::from_params(
            vec![
                Param::new("layer0.weight".into(), 0, Tensor::full(&[1, 1, 1, 1], 3.0)),
                Param::new("layer0.bias".into(), 0, Tensor::zeros(&[1])),
                Param::new("layer1.weight".into(), 1, Tensor::full(&[1, 1, 1, 1], 3.0)),
                Param::new("layer1.bias".into(), 1, Tensor::zeros(&[1])),
            ],
            0,
        );
        let err = grad_check(&net, &params, &Tensor::full(&[1, 1, 1], 1.0), 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }
}
