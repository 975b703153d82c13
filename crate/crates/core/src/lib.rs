//! Goal-driven instance weighting for self-supervised pre-training.
//!
//! The crate learns a weight for every unlabelled source example so that a
//! model pre-trained on the weighted source set performs well on a small
//! labelled target set. Weights are meta-learned through a one-step
//! speculative SGD update:
//!
//! * [`weighters::bdw_step`] keeps a Beta distribution per example and
//!   updates its log-parameters with implicit reparameterization gradients.
//! * [`weighters::dw_step`] keeps clipped point estimates.
//! * [`weighters::l2rw_step`] and [`weighters::nn_weights`] are baselines.
//!
//! Examples whose weight is confidently low are pruned between epochs.
//! [`harness::run_experiment`] ties everything together for the mixed-domain
//! VAE experiment and a small rotation-prediction task.

pub mod data;
pub mod error;
pub mod harness;
pub mod metaloss;
pub mod ndmath;
pub mod net;
pub mod weighters;

pub use error::{Error, Result};
