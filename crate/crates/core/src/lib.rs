//! Mapping face embeddings between recognition systems with Kolmogorov-Arnold
//! networks, plus the protection schemes, leakage simulation and metrics used
//! to evaluate such mappings as an attack.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). Training runs in
//! `f32`; gradient checks use `f64`.

pub mod codec;
pub mod error;
pub mod eval;
pub mod fem;
pub mod kan;
pub mod leakage;
pub mod nn;
pub mod protection;
pub mod rng;
mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::{dot, norm, sc, Scalar};

pub type Matrix32 = nn::Matrix<f32>;
pub type Matrix64 = nn::Matrix<f64>;
pub type FemModel32 = fem::FemModel<f32>;
pub type FemModel64 = fem::FemModel<f64>;
pub type KanNetwork32 = kan::KanNetwork<f32>;
pub type KanNetwork64 = kan::KanNetwork<f64>;
