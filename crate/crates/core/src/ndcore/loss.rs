use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{Gradients, Mlp};
use crate::{Error, Result};

/// Norm floor for normalized-logit cross-entropy.
const LOGIT_NORM_EPS: f64 = 1e-7;

/// A loss over a model's output batch. Every kind is a mean over rows except
/// `CriticDifference`, whose per-row weights already carry the averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossSpec {
    /// `-ln softmax(z / T)[y]`.
    SoftmaxCrossEntropy { temperature: f32 },
    /// `Σ_j (z_j - t_j)²`.
    MeanSquared,
    /// `T · ln Σ_i exp(z_i / T)`, the negated Helmholtz free energy.
    FreeEnergy { temperature: f32 },
    /// `Σ_r w_r · z_r` over a single output column.
    CriticDifference,
    /// Cross-entropy on `z / (‖z‖ · τ)`.
    NormalizedLogitCe { tau: f32 },
    /// Weighted sum of other losses, all sharing the same targets.
    Composite { terms: Vec<(f32, LossSpec)> },
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        LossSpec::SoftmaxCrossEntropy { temperature: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f32| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            LossSpec::SoftmaxCrossEntropy { temperature } | LossSpec::FreeEnergy { temperature } => {
                positive("temperature", *temperature)
            }
            LossSpec::NormalizedLogitCe { tau } => positive("tau", *tau),
            LossSpec::Composite { terms } => terms.iter().try_for_each(|(_, t)| t.validate()),
            LossSpec::MeanSquared | LossSpec::CriticDifference => Ok(()),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Parses `cross-entropy`, `mean-squared`, `free-energy`, `critic-difference`
    /// and `normalized-logit-ce`, optionally followed by `:<temperature or tau>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => {
                let v: f32 = a
                    .parse()
                    .map_err(|_| Error::Config(format!("bad loss parameter in `{s}`")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let spec = match name {
            "cross-entropy" | "softmax-cross-entropy" => LossSpec::SoftmaxCrossEntropy {
                temperature: arg.unwrap_or(1.0),
            },
            "mean-squared" => LossSpec::MeanSquared,
            "free-energy" => LossSpec::FreeEnergy {
                temperature: arg.unwrap_or(1.0),
            },
            "critic-difference" => LossSpec::CriticDifference,
            "normalized-logit-ce" | "logitnorm" => LossSpec::NormalizedLogitCe {
                tau: arg.unwrap_or(0.04),
            },
            other => return Err(Error::Config(format!("unknown loss kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    None,
    Classes(&'a [usize]),
    /// Class targets with a per-row weight; the loss is `Σ w_r ℓ_r / n`.
    WeightedClasses(&'a [usize], &'a [f32]),
    Values(&'a Matrix),
    RowWeights(&'a [f32]),
}

/// `ln Σ exp(v)` with max-subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|&x| (x - lse).exp()).collect()
}

/// Row-wise softmax of a logit matrix, in `f64`.
pub fn softmax_rows(logits: &Matrix) -> Vec<Vec<f64>> {
    logits
        .iter_rows()
        .map(|r| softmax(&r.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()))
        .collect()
}

fn class_targets<'a>(
    targets: Targets<'a>,
    rows: usize,
    cols: usize,
) -> Result<(&'a [usize], Option<&'a [f32]>)> {
    let (labels, weights) = match targets {
        Targets::Classes(l) => (l, None),
        Targets::WeightedClasses(l, w) => (l, Some(w)),
        _ => return Err(Error::Config("classification loss needs class targets".into())),
    };
    if labels.len() != rows {
        return Err(Error::shape("class targets", rows, labels.len()));
    }
    if let Some(w) = weights {
        if w.len() != rows {
            return Err(Error::shape("class target weights", rows, w.len()));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= cols) {
        return Err(Error::shape("class target index", format!("< {cols}"), bad));
    }
    Ok((labels, weights))
}

/// Loss value and `∂loss/∂outputs` for a row-major `rows × cols` output
/// block held in `f64`.
pub fn loss_f64(
    spec: &LossSpec,
    outputs: &[f64],
    rows: usize,
    cols: usize,
    targets: Targets<'_>,
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    if outputs.len() != rows * cols {
        return Err(Error::shape("loss outputs", rows * cols, outputs.len()));
    }
    if rows == 0 {
        return Err(Error::Empty("loss batch".into()));
    }
    let n = rows as f64;
    let mut grad = vec![0f64; outputs.len()];
    let mut total = 0f64;
    match spec {
        LossSpec::SoftmaxCrossEntropy { temperature } => {
            let t = f64::from(*temperature);
            let (labels, weights) = class_targets(targets, rows, cols)?;
            for r in 0..rows {
                let w = weights.map_or(1.0, |w| f64::from(w[r]));
                let z: Vec<f64> = outputs[r * cols..(r + 1) * cols].iter().map(|v| v / t).collect();
                let lse = log_sum_exp(&z);
                total += w * (lse - z[labels[r]]);
                let g = &mut grad[r * cols..(r + 1) * cols];
                for (j, gj) in g.iter_mut().enumerate() {
                    let p = (z[j] - lse).exp();
                    let y = if j == labels[r] { 1.0 } else { 0.0 };
                    *gj = w * (p - y) / (t * n);
                }
            }
            total /= n;
        }
        LossSpec::MeanSquared => {
            let Targets::Values(t) = targets else {
                return Err(Error::Config("mean-squared loss needs value targets".into()));
            };
            if t.shape() != (rows, cols) {
                return Err(Error::shape(
                    "mean-squared targets",
                    format!("{rows}x{cols}"),
                    format!("{}x{}", t.rows(), t.cols()),
                ));
            }
            for (i, (&y, &tv)) in outputs.iter().zip(t.as_slice()).enumerate() {
                let d = y - f64::from(tv);
                total += d * d;
                grad[i] = 2.0 * d / n;
            }
            total /= n;
        }
        LossSpec::FreeEnergy { temperature } => {
            let t = f64::from(*temperature);
            for r in 0..rows {
                let z: Vec<f64> = outputs[r * cols..(r + 1) * cols].iter().map(|v| v / t).collect();
                let lse = log_sum_exp(&z);
                total += t * lse;
                for (j, gj) in grad[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                    *gj = (z[j] - lse).exp() / n;
                }
            }
            total /= n;
        }
        LossSpec::CriticDifference => {
            let Targets::RowWeights(w) = targets else {
                return Err(Error::Config("critic-difference loss needs row weights".into()));
            };
            if cols != 1 {
                return Err(Error::shape("critic output columns", 1, cols));
            }
            if w.len() != rows {
                return Err(Error::shape("critic row weights", rows, w.len()));
            }
            for r in 0..rows {
                total += f64::from(w[r]) * outputs[r];
                grad[r] = f64::from(w[r]);
            }
        }
        LossSpec::NormalizedLogitCe { tau } => {
            let tau = f64::from(*tau);
            let (labels, weights) = class_targets(targets, rows, cols)?;
            for r in 0..rows {
                let w = weights.map_or(1.0, |w| f64::from(w[r]));
                let z = &outputs[r * cols..(r + 1) * cols];
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = norm + LOGIT_NORM_EPS;
                let u: Vec<f64> = z.iter().map(|v| v / (s * tau)).collect();
                let lse = log_sum_exp(&u);
                total += w * (lse - u[labels[r]]);
                // dL/du, then through u = z / (τ s).
                let gu: Vec<f64> = (0..cols)
                    .map(|j| {
                        let y = if j == labels[r] { 1.0 } else { 0.0 };
                        w * ((u[j] - lse).exp() - y) / n
                    })
                    .collect();
                let gz_dot: f64 = gu.iter().zip(z).map(|(a, b)| a * b).sum();
                for (j, gj) in grad[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                    let radial = if norm > 0.0 {
                        z[j] * gz_dot / (tau * s * s * norm)
                    } else {
                        0.0
                    };
                    *gj = gu[j] / (tau * s) - radial;
                }
            }
            total /= n;
        }
        LossSpec::Composite { terms } => {
            for (weight, term) in terms {
                let (v, g) = loss_f64(term, outputs, rows, cols, targets)?;
                let w = f64::from(*weight);
                total += w * v;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += w * b;
                }
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("loss value".into()));
    }
    Ok((total, grad))
}

/// Loss and `∂loss/∂outputs` for an `f32` output batch.
pub fn loss_on_outputs(spec: &LossSpec, outputs: &Matrix, targets: Targets<'_>) -> Result<(f64, Matrix)> {
    let wide: Vec<f64> = outputs.as_slice().iter().map(|&v| f64::from(v)).collect();
    let (loss, grad) = loss_f64(spec, &wide, outputs.rows(), outputs.cols(), targets)?;
    let grad = Matrix::from_vec(
        outputs.rows(),
        outputs.cols(),
        grad.into_iter().map(|g| g as f32).collect(),
    )?;
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct LossGrads {
    pub loss: f64,
    pub params: Gradients,
    pub input: Option<Matrix>,
}

/// Forward, loss, and backward in one call.
pub fn loss_and_grads(
    model: &Mlp,
    batch: &Matrix,
    targets: Targets<'_>,
    spec: &LossSpec,
    wrt_input: bool,
) -> Result<LossGrads> {
    let trace = model.forward_cached(batch)?;
    let (loss, grad_out) = loss_on_outputs(spec, trace.output(), targets)?;
    let (params, input) = model.backward(&trace, &grad_out)?;
    Ok(LossGrads {
        loss,
        params,
        input: wrt_input.then_some(input),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Activation;

    #[test]
    fn uniform_logits_give_ln_k() {
        let z = Matrix::zeros(3, 7);
        let (loss, _) =
            loss_on_outputs(&LossSpec::cross_entropy(), &z, Targets::Classes(&[0, 3, 6])).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn squared_loss_hand_gradient() {
        // y = w·x with w = 2, x = 1, t = 0: loss = 4, dloss/dw = 4.
        let mut m = Mlp::new(&[1, 1], &[Activation::Identity], 0).unwrap();
        m.layers_mut()[0].weight = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let x = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let t = Matrix::zeros(1, 1);
        let lg = loss_and_grads(&m, &x, Targets::Values(&t), &LossSpec::MeanSquared, false).unwrap();
        assert_eq!(lg.loss, 4.0);
        assert_eq!(lg.params.layers[0].0.as_slice(), &[4.0]);
    }

    #[test]
    fn free_energy_zero_logits() {
        let z = Matrix::zeros(1, 2);
        let (loss, _) =
            loss_on_outputs(&LossSpec::FreeEnergy { temperature: 1.0 }, &z, Targets::None).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [0.0f32, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let z = Matrix::from_rows(&[[margin, 0.0, 0.0]]).unwrap();
            let (loss, _) = loss_on_outputs(&LossSpec::cross_entropy(), &z, Targets::Classes(&[0])).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let z = Matrix::from_rows(&[[3.0e4, -3.0e4, 0.0]]).unwrap();
        let (l, g) =
            loss_on_outputs(&LossSpec::FreeEnergy { temperature: 1.0 }, &z, Targets::None).unwrap();
        assert!((l - 3.0e4).abs() < 1e-6);
        assert!(g.all_finite());
    }

    #[test]
    fn parse_loss_kinds() {
        assert_eq!(
            "free-energy:2".parse::<LossSpec>().unwrap(),
            LossSpec::FreeEnergy { temperature: 2.0 }
        );
        assert!("hinge".parse::<LossSpec>().is_err());
        assert!("free-energy:0".parse::<LossSpec>().is_err());
    }

    #[test]
    fn normalized_logits_have_norm_one_over_tau() {
        let tau = 0.04f64;
        let z = [3.0f64, -1.0, 0.5];
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = z.iter().map(|v| v / ((norm + LOGIT_NORM_EPS) * tau)).collect();
        let unorm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((unorm - 1.0 / tau).abs() < 1e-4);
    }

    #[test]
    fn missing_targets_are_reported() {
        let z = Matrix::zeros(1, 2);
        assert!(loss_on_outputs(&LossSpec::cross_entropy(), &z, Targets::None).is_err());
        assert!(loss_on_outputs(&LossSpec::MeanSquared, &z, Targets::None).is_err());
    }
}
