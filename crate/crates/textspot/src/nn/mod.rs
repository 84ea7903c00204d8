//! Minimal reverse-mode differentiation kernels. Every operator exposes a
//! forward evaluation and an explicit backward (vector-Jacobian product);
//! composition order is managed by the caller.

mod gradcheck;
mod loss;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, grad_check_op};
pub use loss::{bce_with_logits, cross_entropy, focal_loss, sigmoid, smooth_l1};
pub use ops::{
    avg_over_height, avg_over_height_backward, channel_norm, channel_norm_backward, conv2d,
    conv2d_backward, linear, linear_backward,
    relu, relu_backward, self_attention, self_attention_backward, softmax, softmax_backward,
};
pub use optim::{clip_grad_norm, sgd_momentum_step, Param, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing gradient for parameter '{0}'")]
    MissingGrad(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("bad format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
