//! Dense matrices, trainable layers, optimizers and gradient checking.

pub mod activation;
pub mod batchnorm;
pub mod gradcheck;
pub mod linear;
mod matrix;
pub mod optim;
pub mod param;

pub use activation::{
    gelu, gelu_backward, gelu_forward, gelu_grad, silu, silu_backward, silu_forward, silu_grad,
};
pub use batchnorm::{BatchNorm1d, BnCache, BnMode};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, Stencil};
pub use linear::LinearLayer;
pub use matrix::Matrix;
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use param::{Param, Trainable};
