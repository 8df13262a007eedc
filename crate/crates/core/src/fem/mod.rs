//! Face-embedding mapping: the MLP and KAN variants, the joint loss and training.

pub mod format;
pub mod loss;
mod model;
mod train;

pub use format::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use loss::{
    joint_loss, joint_loss_with_grad, loss_ced, loss_mse, loss_pd, LossBreakdown, LossWeights,
};
pub use model::{
    mlp_param_count, FemConfig, FemModel, FemNet, FemTrace, MlpBlock, MlpNetwork, MlpTrace,
    Variant, DEFAULT_WIDTHS,
};
pub use train::{evaluate_loss, train, train_with, EpochRecord, TrainConfig};
