//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Networks train in `f32`; gradient checks instantiate the same generic code
//! with `f64`. Reductions (norms, means, losses) accumulate in `f64` through
//! [`Scalar::to_f64c`] regardless of the storage type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point element type usable in matrices, layers and optimizers.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Bytes per element in the little-endian file encodings.
    const BYTES: usize;

    /// Lossless-enough conversion from `f64` (rounds for `f32`).
    fn from_f64c(x: f64) -> Self;

    /// Widening conversion to `f64`.
    fn to_f64c(self) -> f64;

    /// `C ← alpha·A·B + beta·C` on strided operands.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must be
    /// in bounds of the buffers behind the pointers, and `c` must not alias
    /// `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    #[inline]
    fn from_f64c(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64c(self) -> f64 {
        self as f64
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    #[inline]
    fn from_f64c(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64c(self) -> f64 {
        self
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Shorthand for `T::from_f64c`.
#[inline]
pub fn sc<T: Scalar>(x: f64) -> T {
    T::from_f64c(x)
}

/// Dot product accumulated in `f64`.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.to_f64c() * y.to_f64c())
        .sum()
}

/// Euclidean norm accumulated in `f64`.
pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}
