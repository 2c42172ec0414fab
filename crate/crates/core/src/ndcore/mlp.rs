use serde::{Deserialize, Serialize};

use super::matrix::{axpy, Matrix};
use crate::rng::{gaussian, seeded};
use crate::{Error, Result};

pub const LEAKY_SLOPE: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    /// Derivative at pre-activation `x` (0 at the ReLU kink).
    #[inline]
    pub fn derivative(self, x: f32) -> f32 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

/// Fully connected layer. `weight` is `(out × in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn pre_activation(&self, input: &Matrix) -> Result<Matrix> {
        let mut pre = input.matmul_t(&self.weight)?;
        for r in 0..pre.rows() {
            for (v, &b) in pre.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(pre)
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Intermediate values of a forward pass, kept for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn input(&self) -> &Matrix {
        &self.inputs[0]
    }
}

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vec<f32>)>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.out_dim(), l.in_dim()), vec![0.0; l.out_dim()]))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f32) {
        for (w, b) in &mut self.layers {
            w.scale(s);
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &Gradients, s: f32) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            axpy(s, ow.as_slice(), w.as_mut_slice());
            axpy(s, ob, b);
        }
    }

    pub fn slices(&self) -> Vec<&[f32]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f32 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// Builds a network with `dims.len() - 1` layers; `activations` has one
    /// entry per layer. Weights are `N(0, 1/fan_in)`, biases zero.
    pub fn new(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least an input and an output dimension, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer dimensions must be positive, got {dims:?}")));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::shape(
                "Mlp::new activations",
                dims.len() - 1,
                activations.len(),
            ));
        }
        let mut rng = seeded(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = 1.0 / (fan_in as f32).sqrt();
                let data = (0..fan_in * fan_out).map(|_| std * gaussian(&mut rng)).collect();
                Layer {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape(format!("layer {i} bias"), l.out_dim(), l.bias.len()));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::shape(
                    format!("layer {i} input"),
                    layers[i - 1].out_dim(),
                    l.in_dim(),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> Vec<&[f32]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f32]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Clamps every parameter into `[-c, c]`.
    pub fn clip_params(&mut self, c: f32) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.in_dim() {
            return Err(Error::shape("Mlp input columns", self.in_dim(), batch.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.pre_activation(&x)?;
            if layer.activation != Activation::Identity {
                pre.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = layer.activation.apply(*v));
            }
            if !pre.all_finite() {
                return Err(Error::NonFinite(format!("output of layer {i}")));
            }
            x = pre;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, batch: &Matrix) -> Result<Trace> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.pre_activation(&x)?;
            if !pre.all_finite() {
                return Err(Error::NonFinite(format!("pre-activation of layer {i}")));
            }
            let out = pre.map(|v| layer.activation.apply(v));
            inputs.push(x);
            pres.push(pre);
            x = out;
        }
        Ok(Trace {
            inputs,
            pre: pres,
            output: x,
        })
    }

    /// Back-propagates `grad_output` (∂loss/∂output) through a cached pass.
    /// Returns parameter gradients and ∂loss/∂input.
    pub fn backward(&self, trace: &Trace, grad_output: &Matrix) -> Result<(Gradients, Matrix)> {
        if grad_output.shape() != trace.output.shape() {
            return Err(Error::shape(
                "Mlp::backward output gradient",
                format!("{:?}", trace.output.shape()),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[i];
            let input = &trace.inputs[i];
            if layer.activation != Activation::Identity {
                for (gv, &pv) in g.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *gv *= layer.activation.derivative(pv);
                }
            }
            let (gw, gb) = &mut grads.layers[i];
            let mut grad_in = Matrix::zeros(input.rows(), input.cols());
            for r in 0..g.rows() {
                let grow = g.row(r);
                let xrow = input.row(r);
                for (o, &go) in grow.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    axpy(go, xrow, gw.row_mut(o));
                    axpy(go, layer.weight.row(o), grad_in.row_mut(r));
                }
            }
            if !grad_in.all_finite() {
                return Err(Error::NonFinite(format!("input gradient of layer {i}")));
            }
            g = grad_in;
        }
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_network_passes_input_through() {
        let mut m = Mlp::new(&[3, 3], &[Activation::Identity], 0).unwrap();
        m.layers_mut()[0].weight = Matrix::identity(3);
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn relu_clamps_negative_inputs() {
        let mut m = Mlp::new(&[2, 2], &[Activation::Relu], 0).unwrap();
        m.layers_mut()[0].weight = Matrix::identity(2);
        let y = m.forward(&Matrix::from_rows(&[[-1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn leaky_relu_uses_fixed_slope() {
        let mut m = Mlp::new(&[1, 1], &[Activation::LeakyRelu], 0).unwrap();
        m.layers_mut()[0].weight = Matrix::identity(1);
        let y = m.forward(&Matrix::from_rows(&[[-5.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[-1.0]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Mlp::new(&[2, 1], &[Activation::Identity], 11).unwrap();
        let b = Mlp::new(&[2, 1], &[Activation::Identity], 11).unwrap();
        assert_eq!(a, b);
        let c = Mlp::new(&[2, 1], &[Activation::Identity], 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_of_generator_sized_net() {
        let m = Mlp::new(
            &[2048, 1024, 312],
            &[Activation::LeakyRelu, Activation::Identity],
            0,
        )
        .unwrap();
        assert_eq!(m.param_count(), 2048 * 1024 + 1024 + 1024 * 312 + 312);
    }

    #[test]
    fn construction_errors() {
        assert!(Mlp::new(&[], &[], 0).is_err());
        assert!(Mlp::new(&[3], &[], 0).is_err());
        assert!(Mlp::new(&[3, 0], &[Activation::Relu], 0).is_err());
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = Mlp::new(&[3, 2], &[Activation::Identity], 0).unwrap();
        let err = m.forward(&Matrix::zeros(1, 4)).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('4'), "{err}");
    }

    #[test]
    fn initial_bias_is_zero() {
        let m = Mlp::new(&[4, 5, 2], &[Activation::Relu, Activation::Identity], 1).unwrap();
        assert!(m.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }
}
