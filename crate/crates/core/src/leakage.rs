//! Partial leakage: only a prefix of each template reaches the adversary and
//! the rest is zero-filled.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfUp,
    Floor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageSpec {
    /// Leaked share of the template, in `(0, 1]`.
    pub fraction: f64,
    pub total_dim: usize,
    #[serde(default)]
    pub rounding: Rounding,
}

impl LeakageSpec {
    pub fn new(fraction: f64, total_dim: usize) -> Result<Self> {
        let s = Self {
            fraction,
            total_dim,
            rounding: Rounding::HalfUp,
        };
        s.kept()?;
        Ok(s)
    }

    /// Number of leading entries that survive.
    pub fn kept(&self) -> Result<usize> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "leak fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        let x = self.fraction * self.total_dim as f64;
        let k = match self.rounding {
            Rounding::HalfUp => (x + 0.5).floor(),
            Rounding::Floor => x.floor(),
        } as usize;
        if k == 0 {
            return Err(Error::InvalidArgument(format!(
                "fraction {} of {} keeps no entries",
                self.fraction, self.total_dim
            )));
        }
        Ok(k.min(self.total_dim))
    }
}

/// Keep the first `spec.kept()` entries of `v` and zero the rest.
pub fn leak<T: Scalar>(v: &[T], spec: &LeakageSpec) -> Result<Vec<T>> {
    if v.len() != spec.total_dim {
        return Err(shape_err(
            "leak",
            format!("[{}]", v.len()),
            format!("[{}]", spec.total_dim),
        ));
    }
    let k = spec.kept()?;
    let mut out = v.to_vec();
    out[k..].iter_mut().for_each(|x| *x = T::zero());
    Ok(out)
}
