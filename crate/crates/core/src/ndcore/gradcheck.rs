//! Central finite differences against an `f64` re-implementation of the
//! forward pass. The reference path shares no arithmetic with the `f32`
//! forward/backward it checks; only the loss value function is common.

use rand::seq::index::sample;

use super::loss::{loss_f64, LossSpec, Targets};
use super::matrix::Matrix;
use super::mlp::{Activation, Mlp};
use crate::rng::seeded;
use crate::{Error, Result};

/// Upper bound on coordinates probed per tensor group.
const MAX_PROBES: usize = 256;

#[derive(Debug, Clone)]
struct RefLayer {
    weight: Vec<f64>,
    bias: Vec<f64>,
    n_in: usize,
    n_out: usize,
    activation: Activation,
}

fn reference_layers(model: &Mlp) -> Vec<RefLayer> {
    model
        .layers()
        .iter()
        .map(|l| RefLayer {
            weight: l.weight.as_slice().iter().map(|&v| f64::from(v)).collect(),
            bias: l.bias.iter().map(|&v| f64::from(v)).collect(),
            n_in: l.in_dim(),
            n_out: l.out_dim(),
            activation: l.activation,
        })
        .collect()
}

fn reference_activation(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Identity => x,
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                0.2 * x
            }
        }
    }
}

fn reference_forward(layers: &[RefLayer], input: &[f64], rows: usize) -> Vec<f64> {
    let mut x = input.to_vec();
    for l in layers {
        let mut y = vec![0f64; rows * l.n_out];
        for r in 0..rows {
            for o in 0..l.n_out {
                let mut s = l.bias[o];
                for i in 0..l.n_in {
                    s += l.weight[o * l.n_in + i] * x[r * l.n_in + i];
                }
                y[r * l.n_out + o] = reference_activation(l.activation, s);
            }
        }
        x = y;
    }
    x
}

/// `f64` forward pass of `model`, independent of [`Mlp::forward`].
pub fn reference_output(model: &Mlp, input: &[f64], rows: usize) -> Vec<f64> {
    reference_forward(&reference_layers(model), input, rows)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

fn probes(len: usize, seed: u64) -> Vec<usize> {
    if len <= MAX_PROBES {
        (0..len).collect()
    } else {
        let mut v = sample(&mut seeded(seed), len, MAX_PROBES).into_vec();
        v.sort_unstable();
        v
    }
}

/// Maximum relative error `|analytic − numeric| / max(1, |numeric|)` over
/// probed parameters and, with `wrt_input`, probed input coordinates.
pub fn finite_diff_check(
    model: &Mlp,
    batch: &Matrix,
    targets: Targets<'_>,
    spec: &LossSpec,
    eps: f64,
    wrt_input: bool,
) -> Result<f64> {
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(Error::Config(format!("finite-difference step must lie in [1e-6, 1e-2], got {eps}")));
    }
    let analytic = super::loss::loss_and_grads(model, batch, targets, spec, wrt_input)?;
    let rows = batch.rows();
    let out_dim = model.out_dim();
    let base = reference_layers(model);
    let input: Vec<f64> = batch.as_slice().iter().map(|&v| f64::from(v)).collect();
    let value = |layers: &[RefLayer], x: &[f64]| -> Result<f64> {
        let out = reference_forward(layers, x, rows);
        Ok(loss_f64(spec, &out, rows, out_dim, targets)?.0)
    };

    let mut worst = 0f64;
    for (li, (gw, gb)) in analytic.params.layers.iter().enumerate() {
        for (is_bias, grads) in [(false, gw.as_slice()), (true, gb.as_slice())] {
            for idx in probes(grads.len(), (li as u64) << 1 | is_bias as u64) {
                let mut plus = base.clone();
                let mut minus = base.clone();
                let (p, m) = if is_bias {
                    (&mut plus[li].bias[idx], &mut minus[li].bias[idx])
                } else {
                    (&mut plus[li].weight[idx], &mut minus[li].weight[idx])
                };
                *p += eps;
                *m -= eps;
                let numeric = (value(&plus, &input)? - value(&minus, &input)?) / (2.0 * eps);
                worst = worst.max(relative_error(f64::from(grads[idx]), numeric));
            }
        }
    }
    if let Some(gin) = &analytic.input {
        for idx in probes(input.len(), 0xffff) {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus[idx] += eps;
            minus[idx] -= eps;
            let numeric = (value(&base, &plus)? - value(&base, &minus)?) / (2.0 * eps);
            worst = worst.max(relative_error(f64::from(gin.as_slice()[idx]), numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    #[test]
    fn identity_layer_squared_loss() {
        let mut m = Mlp::new(&[3, 3], &[Activation::Identity], 0).unwrap();
        m.layers_mut()[0].weight = Matrix::identity(3);
        let x = gaussian_matrix(&mut seeded(1), 4, 3, 1.0);
        let t = gaussian_matrix(&mut seeded(2), 4, 3, 1.0);
        let err = finite_diff_check(&m, &x, Targets::Values(&t), &LossSpec::MeanSquared, 1e-4, true).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn two_layer_relu_cross_entropy() {
        let m = Mlp::new(&[5, 8, 4], &[Activation::Relu, Activation::Identity], 0).unwrap();
        let x = gaussian_matrix(&mut seeded(0), 6, 5, 1.0);
        let y = [0, 1, 2, 3, 1, 0];
        let err = finite_diff_check(&m, &x, Targets::Classes(&y), &LossSpec::cross_entropy(), 1e-4, true).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn free_energy_wrt_input() {
        let m = Mlp::new(&[4, 6, 3], &[Activation::LeakyRelu, Activation::Identity], 3).unwrap();
        let x = gaussian_matrix(&mut seeded(5), 3, 4, 1.0);
        let spec = LossSpec::FreeEnergy { temperature: 1.0 };
        let err = finite_diff_check(&m, &x, Targets::None, &spec, 1e-4, true).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let m = Mlp::new(&[1, 1], &[Activation::Identity], 0).unwrap();
        let x = Matrix::zeros(1, 1);
        assert!(finite_diff_check(&m, &x, Targets::None, &LossSpec::FreeEnergy { temperature: 1.0 }, 0.1, false).is_err());
    }

    #[test]
    fn reference_output_agrees_with_forward() {
        let m = Mlp::new(&[3, 4, 2], &[Activation::LeakyRelu, Activation::Identity], 9).unwrap();
        let x = gaussian_matrix(&mut seeded(9), 5, 3, 1.0);
        let fast = m.forward(&x).unwrap();
        let wide: Vec<f64> = x.as_slice().iter().map(|&v| f64::from(v)).collect();
        let slow = reference_output(&m, &wide, 5);
        for (a, b) in fast.as_slice().iter().zip(&slow) {
            assert!((f64::from(*a) - b).abs() < 1e-5);
        }
    }
}
