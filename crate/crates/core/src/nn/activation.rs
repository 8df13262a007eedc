//! Pointwise activations and their derivatives.

use crate::nn::Matrix;
use crate::scalar::{sc, Scalar};

const GELU_CUBIC: f64 = 0.044715;

/// GELU, tanh approximation.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = (T::FRAC_2_PI()).sqrt() * (x + sc::<T>(GELU_CUBIC) * x * x * x);
    sc::<T>(0.5) * x * (T::one() + c.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::FRAC_2_PI().sqrt();
    let a = sc::<T>(GELU_CUBIC);
    let th = (k * (x + a * x * x * x)).tanh();
    let sech2 = T::one() - th * th;
    sc::<T>(0.5) * (T::one() + th)
        + sc::<T>(0.5) * x * sech2 * k * (T::one() + sc::<T>(3.0) * a * x * x)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// SiLU, `x·σ(x)`.
#[inline]
pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

pub fn gelu_forward<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(gelu)
}

/// Gradient through GELU given the pre-activation `x`.
pub fn gelu_backward<T: Scalar>(x: &Matrix<T>, grad_out: &Matrix<T>) -> Matrix<T> {
    let mut g = grad_out.clone();
    g.as_mut_slice()
        .iter_mut()
        .zip(x.as_slice())
        .for_each(|(g, &x)| *g *= gelu_grad(x));
    g
}

pub fn silu_forward<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(silu)
}

pub fn silu_backward<T: Scalar>(x: &Matrix<T>, grad_out: &Matrix<T>) -> Matrix<T> {
    let mut g = grad_out.clone();
    g.as_mut_slice()
        .iter_mut()
        .zip(x.as_slice())
        .for_each(|(g, &x)| *g *= silu_grad(x));
    g
}
