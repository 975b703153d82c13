//! Numeric building blocks: dense tensors, seeded random streams and the
//! Beta-distribution special functions used by the weighters.

mod rng;
mod sampling;
mod special;
mod tensor;

pub(crate) use rng::splitmix64;
pub use rng::RandomStream;
pub use sampling::{sample_beta, sample_gamma, sample_standard_normal};
pub use special::{
    beta_cdf, beta_cdf_param_grads, beta_pdf, beta_quantile, implicit_beta_grad, lbeta, lgamma,
    BetaParams, ImplicitGrad, IMPLICIT_CLAMP_EPS,
};
pub use tensor::Tensor;
