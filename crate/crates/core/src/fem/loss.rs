//! Reconstruction losses between target embeddings `e` and mapped embeddings `ê`.
//!
//! `total = λ_mse·MSE + λ_pd·PD + λ_ced·CED`, each term averaged over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::scalar::{dot, sc, Scalar};

/// Mean squared error, `Σ(eᵢ − êᵢ)² / N`.
pub fn loss_mse<T: Scalar>(e: &[T], e_hat: &[T]) -> Result<f64> {
    same_len("loss_mse", e, e_hat)?;
    if e.is_empty() {
        return Err(Error::InvalidArgument("loss_mse on empty vectors".into()));
    }
    Ok(sq_dist(e, e_hat) / e.len() as f64)
}

/// Euclidean pairwise distance, `‖e − ê‖₂`.
pub fn loss_pd<T: Scalar>(e: &[T], e_hat: &[T]) -> Result<f64> {
    same_len("loss_pd", e, e_hat)?;
    Ok(sq_dist(e, e_hat).sqrt())
}

/// Cosine embedding distance, `1 − cos(e, ê)`.
pub fn loss_ced<T: Scalar>(e: &[T], e_hat: &[T]) -> Result<f64> {
    same_len("loss_ced", e, e_hat)?;
    let (ne, nh) = (dot(e, e).sqrt(), dot(e_hat, e_hat).sqrt());
    if ne == 0.0 || nh == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(1.0 - (dot(e, e_hat) / (ne * nh)).clamp(-1.0, 1.0))
}

fn same_len<T>(op: &'static str, a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape_err(
            op,
            format!("[{}]", a.len()),
            format!("[{}]", b.len()),
        ));
    }
    Ok(())
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64c() - y.to_f64c();
            d * d
        })
        .sum()
}

/// Loss-term weights `(λ_mse, λ_pd, λ_ced)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mse: f64,
    pub pd: f64,
    pub ced: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::FULL
    }
}

impl LossWeights {
    pub const FULL: Self = Self {
        mse: 1.0,
        pd: 0.5,
        ced: 10.0,
    };
    /// PD only, keeping its weight from the full combination.
    pub const PD: Self = Self {
        mse: 0.0,
        pd: 0.5,
        ced: 0.0,
    };
    pub const PD_CED: Self = Self {
        mse: 0.0,
        pd: 0.5,
        ced: 10.0,
    };

    /// Ablation presets by name: `full`, `pd`, `pd+ced`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" | "mse+pd+ced" => Some(Self::FULL),
            "pd" => Some(Self::PD),
            "pd+ced" => Some(Self::PD_CED),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.mse, self.pd, self.ced]
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Batch-mean loss terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub pd: f64,
    pub ced: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn combine(mse: f64, pd: f64, ced: f64, w: &LossWeights) -> Self {
        Self {
            mse,
            pd,
            ced,
            total: w.mse * mse + w.pd * pd + w.ced * ced,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mse.is_finite()
            && self.pd.is_finite()
            && self.ced.is_finite()
            && self.total.is_finite()
    }
}

fn check_batches<T: Scalar>(e: &Matrix<T>, e_hat: &Matrix<T>) -> Result<()> {
    if e.shape() != e_hat.shape() {
        return Err(shape_err("joint_loss", e.shape_str(), e_hat.shape_str()));
    }
    if e.rows() == 0 || e.cols() == 0 {
        return Err(Error::InvalidArgument(
            "joint_loss on an empty batch".into(),
        ));
    }
    Ok(())
}

/// Batch-averaged joint loss.
pub fn joint_loss<T: Scalar>(
    e: &Matrix<T>,
    e_hat: &Matrix<T>,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    check_batches(e, e_hat)?;
    let (mut mse, mut pd, mut ced) = (0.0, 0.0, 0.0);
    for (a, b) in e.iter_rows().zip(e_hat.iter_rows()) {
        mse += loss_mse(a, b)?;
        pd += loss_pd(a, b)?;
        ced += loss_ced(a, b)?;
    }
    let n = e.rows() as f64;
    Ok(LossBreakdown::combine(mse / n, pd / n, ced / n, w))
}

/// Joint loss together with `∂total/∂ê`.
///
/// The distance term has no gradient where `ê = e` exactly; zero is used there.
pub fn joint_loss_with_grad<T: Scalar>(
    e: &Matrix<T>,
    e_hat: &Matrix<T>,
    w: &LossWeights,
) -> Result<(LossBreakdown, Matrix<T>)> {
    check_batches(e, e_hat)?;
    let (batch, dim) = e.shape();
    let nb = batch as f64;
    let nd = dim as f64;
    let mut grad = Matrix::zeros(batch, dim);
    let (mut mse, mut pd, mut ced) = (0.0, 0.0, 0.0);
    for r in 0..batch {
        let (a, b) = (e.row(r), e_hat.row(r));
        let d2 = sq_dist(a, b);
        let dist = d2.sqrt();
        let (ne, nh) = (dot(a, a).sqrt(), dot(b, b).sqrt());
        if ne == 0.0 || nh == 0.0 {
            return Err(Error::ZeroVector);
        }
        let cos = dot(a, b) / (ne * nh);
        mse += d2 / nd;
        pd += dist;
        ced += 1.0 - cos.clamp(-1.0, 1.0);

        let pd_scale = if dist > 0.0 { w.pd / dist } else { 0.0 };
        for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
            let (x, y) = (a[j].to_f64c(), b[j].to_f64c());
            let diff = y - x;
            let d_mse = 2.0 * diff / nd;
            let d_ced = -(x / (ne * nh) - cos * y / (nh * nh));
            *g = sc((w.mse * d_mse + pd_scale * diff + w.ced * d_ced) / nb);
        }
    }
    Ok((LossBreakdown::combine(mse / nb, pd / nb, ced / nb, w), grad))
}
