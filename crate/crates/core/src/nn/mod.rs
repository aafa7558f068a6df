//! Small neural-network kernel: tensors, five layer kinds with a recorded
//! reverse pass, losses and the ADAM optimizer.

pub mod adam;
pub mod complexity;
pub mod init;
pub mod layers;
pub mod loss;
mod scalar;
mod sequential;
mod skinny;
mod tensor;

pub use adam::{AdamConfig, AdamState, StepOutcome};
pub use complexity::{flops_estimate, flops_from_widths};
pub use layers::{ActivationKind, BatchNorm, Cache, Conv2d, Dense, Layer, LayerKind, LayerSpec, Mode, Reshape};
pub use loss::{kl_sparsity, mse_loss, LossValue};
pub use scalar::Scalar;
pub use sequential::{Sequential, Tape};
pub use tensor::Tensor;

/// Gradients aligned one-to-one with a group's [`ParameterGroup::params`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like<G: ParameterGroup<T> + ?Sized>(group: &G) -> Self {
        Self {
            tensors: group.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// A set of trainable tensors that can be frozen as a unit.
pub trait ParameterGroup<T: Scalar> {
    fn params(&self) -> Vec<&Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;
    fn is_frozen(&self) -> bool;
    fn set_frozen(&mut self, frozen: bool);
}
