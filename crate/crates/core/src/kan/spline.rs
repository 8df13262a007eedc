//! Uniform-knot B-spline bases (Cox–de Boor).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sc, Scalar};

/// Uniform knot grid over `[lo, hi]` with `grid_size` intervals, extended by
/// `order` knots on each side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    pub grid_size: usize,
    pub order: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for SplineGrid {
    fn default() -> Self {
        Self {
            grid_size: 5,
            order: 3,
            lo: -1.0,
            hi: 1.0,
        }
    }
}

impl SplineGrid {
    pub fn new(grid_size: usize, order: usize, lo: f64, hi: f64) -> Result<Self> {
        let g = Self {
            grid_size,
            order,
            lo,
            hi,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(Error::InvalidArgument(
                "spline grid needs at least one interval".into(),
            ));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidArgument(format!(
                "spline range [{}, {}] must be finite and increasing",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Number of basis functions, `G + k`.
    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.grid_size as f64
    }

    /// The `G + 2k + 1` knots.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..=self.grid_size + 2 * self.order)
            .map(|j| self.lo + (j as f64 - self.order as f64) * h)
            .collect()
    }

    /// Basis values at `x`; writes `G + k` entries into `out`.
    pub fn basis_into<T: Scalar>(&self, x: T, out: &mut [T]) {
        let mut scratch = vec![T::zero(); self.grid_size + 2 * self.order];
        self.eval(x, out, None, &mut scratch);
    }

    /// Basis values and their derivatives wrt `x`.
    pub fn basis_and_derivative_into<T: Scalar>(
        &self,
        x: T,
        out: &mut [T],
        dout: &mut [T],
        scratch: &mut [T],
    ) {
        self.eval(x, out, Some(dout), scratch);
    }

    /// Convenience allocation wrapper around [`basis_into`](Self::basis_into).
    pub fn basis<T: Scalar>(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.num_basis()];
        self.basis_into(x, &mut out);
        out
    }

    /// Scratch length required by [`basis_and_derivative_into`](Self::basis_and_derivative_into).
    pub fn scratch_len(&self) -> usize {
        self.grid_size + 2 * self.order
    }

    fn eval<T: Scalar>(&self, x: T, out: &mut [T], dout: Option<&mut [T]>, b: &mut [T]) {
        let k = self.order;
        let nb = self.num_basis();
        assert!(out.len() >= nb && b.len() >= self.grid_size + 2 * k);
        let h = sc::<T>(self.spacing());
        let lo = sc::<T>(self.lo);
        let knot = |j: usize| lo + sc::<T>(j as f64 - k as f64) * h;

        // order 0: indicator of [t_j, t_{j+1})
        let n0 = self.grid_size + 2 * k;
        for (j, bj) in b.iter_mut().enumerate().take(n0) {
            *bj = if x >= knot(j) && x < knot(j + 1) {
                T::one()
            } else {
                T::zero()
            };
        }
        // raise the order in place; after step p, b[0..n0-p] holds order-p values
        for p in 1..=k {
            let denom = sc::<T>(p as f64) * h;
            if p == k {
                if let Some(d) = dout {
                    // B'_{j,k} = (B_{j,k-1} − B_{j+1,k-1}) / h on uniform knots
                    for j in 0..nb {
                        d[j] = (b[j] - b[j + 1]) / h;
                    }
                }
                for j in 0..nb {
                    let left = (x - knot(j)) / denom * b[j];
                    let right = (knot(j + p + 1) - x) / denom * b[j + 1];
                    out[j] = left + right;
                }
                return;
            }
            for j in 0..n0 - p {
                let left = (x - knot(j)) / denom * b[j];
                let right = (knot(j + p + 1) - x) / denom * b[j + 1];
                b[j] = left + right;
            }
        }
        // k == 0
        out[..nb].copy_from_slice(&b[..nb]);
        if let Some(d) = dout {
            d[..nb].iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Free-function form of [`SplineGrid::basis`].
pub fn bspline_basis<T: Scalar>(x: T, grid: &SplineGrid) -> Vec<T> {
    grid.basis(x)
}
