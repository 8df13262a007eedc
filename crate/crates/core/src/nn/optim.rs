//! SGD and AdamW with per-epoch exponential learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::Trainable;
use crate::scalar::{sc, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

/// Hyper-parameters; see [`OptimizerConfig::sgd`] and [`OptimizerConfig::adamw`] for defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    /// Multiplier applied to `lr` at the end of every epoch.
    pub lr_decay_gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    /// Plain SGD without momentum or decay.
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            weight_decay: 0.0,
            lr_decay_gamma: 1.0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
        }
    }

    /// AdamW with decay 0.8 per epoch.
    pub fn adamw(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr,
            weight_decay: 1e-2,
            lr_decay_gamma: 0.8,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("optimizer: {m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(self.lr_decay_gamma > 0.0 && self.lr_decay_gamma <= 1.0) {
            return bad("lr_decay_gamma must lie in (0, 1]");
        }
        if self.kind == OptimizerKind::AdamW
            && !((0.0..1.0).contains(&self.beta1)
                && (0.0..1.0).contains(&self.beta2)
                && self.eps > 0.0)
        {
            return bad("AdamW needs beta1, beta2 in [0,1) and eps > 0");
        }
        Ok(())
    }
}

/// Optimizer state: current learning rate, step count and moment buffers.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    pub lr: f64,
    pub step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lr: config.lr,
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        })
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.first_moment
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.second_moment
    }

    /// One update from the gradients currently stored in `model`.
    ///
    /// Gradients are checked first; a non-finite entry aborts before any
    /// parameter changes, naming the offending tensor.
    pub fn step(&mut self, model: &mut dyn Trainable<T>) -> Result<()> {
        let mut bad: Option<String> = None;
        model.visit_params("", &mut |p| {
            if bad.is_none() && p.grad.iter().any(|g| !g.is_finite()) {
                bad = Some(format!("gradient of {}", p.name));
            }
        });
        if let Some(name) = bad {
            return Err(Error::Diverged(name));
        }

        self.step += 1;
        let cfg = self.config;
        let lr = self.lr;
        match cfg.kind {
            OptimizerKind::Sgd => {
                let wd = cfg.weight_decay;
                model.visit_params("", &mut |p| {
                    for (v, &g) in p.value.iter_mut().zip(p.grad.iter()) {
                        let g = g.to_f64c() + wd * v.to_f64c();
                        *v = sc(v.to_f64c() - lr * g);
                    }
                });
            }
            OptimizerKind::AdamW => {
                let (b1, b2) = (cfg.beta1, cfg.beta2);
                let bc1 = 1.0 - b1.powi(self.step as i32);
                let bc2 = 1.0 - b2.powi(self.step as i32);
                let decay = 1.0 - lr * cfg.weight_decay;
                let (ms, vs) = (&mut self.first_moment, &mut self.second_moment);
                let mut idx = 0usize;
                model.visit_params("", &mut |p| {
                    if ms.len() <= idx {
                        ms.push(vec![T::zero(); p.value.len()]);
                        vs.push(vec![T::zero(); p.value.len()]);
                    }
                    let (m, v) = (&mut ms[idx], &mut vs[idx]);
                    assert_eq!(m.len(), p.value.len(), "moment buffer shape for {}", p.name);
                    for i in 0..p.value.len() {
                        let g = p.grad[i].to_f64c();
                        let mi = b1 * m[i].to_f64c() + (1.0 - b1) * g;
                        let vi = b2 * v[i].to_f64c() + (1.0 - b2) * g * g;
                        m[i] = sc(mi);
                        v[i] = sc(vi);
                        let w = p.value[i].to_f64c() * decay;
                        let update = (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
                        p.value[i] = sc(w - lr * update);
                    }
                    idx += 1;
                });
            }
        }
        Ok(())
    }

    /// End-of-epoch exponential decay, `lr ← lr·gamma`.
    pub fn epoch_lr_decay(&mut self) {
        self.lr *= self.config.lr_decay_gamma;
    }
}
