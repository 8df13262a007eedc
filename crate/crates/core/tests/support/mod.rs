//! Helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

pub mod grads;
pub mod oracles;

use femap::nn::Matrix;
use rand::Rng;

pub fn uniform_matrix<R: Rng>(
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    r: &mut R,
) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| r.random_range(lo..hi))
}

pub fn uniform_vec<R: Rng>(n: usize, lo: f64, hi: f64, r: &mut R) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// Standard normal draws via Box–Muller, kept local so oracles share no code with the library.
pub fn normal_vec<R: Rng>(n: usize, r: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = 1.0 - r.random::<f64>();
            let u2: f64 = r.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}
