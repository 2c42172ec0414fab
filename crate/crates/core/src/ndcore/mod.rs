//! Dense `f32` tensors, fully connected networks, and reverse-mode gradients
//! over a fixed layer stack. Losses accumulate in `f64`.

mod adam;
mod gradcheck;
mod loss;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, reference_output};
pub use loss::{
    log_sum_exp, loss_and_grads, loss_f64, loss_on_outputs, softmax, softmax_rows, LossGrads,
    LossSpec, Targets,
};
pub use matrix::{argmax, axpy, dot, l2_distance, l2_norm, Matrix};
pub use mlp::{Activation, Gradients, Layer, Mlp, Trace, LEAKY_SLOPE};

/// Builds an MLP from layer widths; see [`Mlp::new`].
pub fn build_mlp(layer_dims: &[usize], activations: &[Activation], seed: u64) -> crate::Result<Mlp> {
    Mlp::new(layer_dims, activations, seed)
}
