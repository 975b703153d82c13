//! Small fully-connected models (a Gaussian-latent VAE and a rotation
//! classifier), their losses, exact per-example gradients and SGD.
//!
//! Everything is batched: a [`BatchGrads`] holds, for every layer, the layer
//! inputs and the back-propagated pre-activation deltas of each example.
//! The gradient of example `i` with respect to a dense layer is the outer
//! product `delta_i ⊗ input_i`, so weighted sums of per-example gradients
//! and their inner products with a fixed direction are computed with two
//! matrix products instead of materialising one parameter vector per
//! example.

mod grads;
mod layout;
pub(crate) mod losses;
mod mlp;

pub use grads::{batch_grads, per_example_grads, sgd_step, BatchGrads, LossKind};
pub use layout::{Activation, DenseSlot, HeadKind, Layout, MlpSpec, Model, ParamVector};
pub use losses::{
    cross_entropy, rotation_batch, rotation_losses, rotation_loss, vae_batch, vae_loss, vae_loss_with_noise,
    LossEval, VaeLoss,
};
pub use mlp::{feature_backward, features, forward, ChainTrace, ForwardTrace};
