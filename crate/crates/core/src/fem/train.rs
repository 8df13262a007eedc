use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::fem::loss::{joint_loss, joint_loss_with_grad, LossBreakdown, LossWeights};
use crate::fem::model::{FemModel, Variant};
use crate::nn::{Matrix, OptimizerConfig, OptimizerState, Trainable};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambdas: LossWeights,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainConfig {
    /// Defaults per variant: KAN trains with SGD at 1e-2, MLP with AdamW at
    /// 1e-3 decayed by 0.8 per epoch; 20 epochs of batch 128 either way.
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            lambdas: LossWeights::FULL,
            optimizer: match variant {
                Variant::Kan => OptimizerConfig::sgd(1e-2),
                Variant::Mlp => OptimizerConfig::adamw(1e-3),
            },
            seed: 0,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 2".into(),
            ));
        }
        self.lambdas.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Sample-weighted mean of the batch losses.
    pub loss: LossBreakdown,
}

/// Split `n` shuffled indices into batches; a trailing singleton joins the
/// previous batch so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Mini-batch training of `model` to map `source` rows onto `target` rows.
/// Returns one record per epoch.
pub fn train<T: Scalar>(
    model: &mut FemModel<T>,
    source: &Matrix<T>,
    target: &Matrix<T>,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    train_with(model, source, target, config, |_| {})
}

/// [`train`], calling `on_epoch` after every epoch.
pub fn train_with<T: Scalar>(
    model: &mut FemModel<T>,
    source: &Matrix<T>,
    target: &Matrix<T>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    if source.shape() != target.shape() {
        return Err(shape_err(
            "train pairs",
            source.shape_str(),
            target.shape_str(),
        ));
    }
    if source.cols() != model.embedding_dim {
        return Err(shape_err(
            "train",
            format!("pairs {}", source.shape_str()),
            format!("embedding_dim {}", model.embedding_dim),
        ));
    }
    let mut history = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(history);
    }
    if source.rows() == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }

    let mut opt = OptimizerState::<T>::new(config.optimizer)?;
    let mut order: Vec<usize> = (0..source.rows()).collect();
    for epoch in 0..config.epochs {
        if config.shuffle {
            order.sort_unstable();
            order.shuffle(&mut rng::stream(config.seed, "train.shuffle", epoch as u64));
        }
        let lr = opt.lr;
        let mut sum = LossBreakdown::default();
        for idx in batches(&order, config.batch_size) {
            let x = source.select_rows(idx);
            let y = target.select_rows(idx);
            model.zero_grad();
            let (pred, trace) = model.forward_train(&x)?;
            let (loss, grad) = joint_loss_with_grad(&y, &pred, &config.lambdas)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss at epoch {epoch}")));
            }
            model.backward(&trace, &grad)?;
            opt.step(model)?;
            let w = idx.len() as f64;
            sum.mse += w * loss.mse;
            sum.pd += w * loss.pd;
            sum.ced += w * loss.ced;
            sum.total += w * loss.total;
        }
        let n = source.rows() as f64;
        let record = EpochRecord {
            epoch,
            lr,
            loss: LossBreakdown {
                mse: sum.mse / n,
                pd: sum.pd / n,
                ced: sum.ced / n,
                total: sum.total / n,
            },
        };
        on_epoch(&record);
        history.push(record);
        opt.epoch_lr_decay();
    }
    Ok(history)
}

/// Joint loss of the model's eval-mode mapping over a whole set.
pub fn evaluate_loss<T: Scalar>(
    model: &FemModel<T>,
    source: &Matrix<T>,
    target: &Matrix<T>,
    lambdas: &LossWeights,
) -> Result<LossBreakdown> {
    let mapped = model.map_embedding(source)?;
    joint_loss(target, &mapped, lambdas)
}
