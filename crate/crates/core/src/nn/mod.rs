//! Small dense training engine: parameters, linear layers with PReLU,
//! losses with hand-derived gradients, Adam and a finite-difference checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod linear;
mod loss;
mod param;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use gradcheck::{finite_diff_check, GradCheckReport, Objective, ParamCheck, GRAD_ATOL, MAX_COORDS_PER_PARAM};
pub use linear::{Activation, LinearCache, LinearLayer, PRELU_INIT};
pub use loss::{
    bce_pair_loss, bilinear_discriminator, bilinear_discriminator_grad, sigmoid, softmax_cross_entropy,
    softmax_over_filters, softmax_over_filters_backward, softmax_rows, softplus, BilinearGrad, SCORE_CLAMP,
};
pub use param::Param;
