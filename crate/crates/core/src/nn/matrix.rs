use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Rows of the output computed per rayon task. Fixed so that results never
/// depend on the number of worker threads.
const ROW_BLOCK: usize = 64;
const PAR_MIN_FLOPS: usize = 1 << 20;

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} elements cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(shape_err(
                    "from_rows",
                    format!("row 0 len {cols}"),
                    format!("row {i} len {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("[{}x{}]", self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact panics on 0
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copy the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same("add_assign", other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// Add `v` to every row.
    pub fn add_row_vector(&mut self, v: &[T]) -> Result<()> {
        if v.len() != self.cols {
            return Err(shape_err(
                "add_row_vector",
                self.shape_str(),
                format!("[{}]", v.len()),
            ));
        }
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            row.iter_mut().zip(v).for_each(|(a, &b)| *a += b);
        }
        Ok(())
    }

    /// Per-column sums accumulated in `f64`.
    pub fn column_sums(&self) -> Vec<T> {
        let mut acc = vec![0.0f64; self.cols];
        for row in self.iter_rows() {
            acc.iter_mut()
                .zip(row)
                .for_each(|(a, &x)| *a += x.to_f64c());
        }
        acc.into_iter().map(T::from_f64c).collect()
    }

    /// Convert to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64c(x.to_f64c()))
                .collect(),
        }
    }

    fn check_same(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(op, self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(shape_err("matmul", self.shape_str(), other.shape_str()));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            T::one(),
            View::normal(self),
            View::normal(other),
            T::zero(),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(shape_err(
                "matmul_nt",
                self.shape_str(),
                format!("{}ᵀ", other.shape_str()),
            ));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            T::one(),
            View::normal(self),
            View::transposed(other),
            T::zero(),
            &mut out.data,
        );
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.cols, other.cols);
        self.matmul_tn_acc(other, T::one(), T::zero(), &mut out)?;
        Ok(out)
    }

    /// `out ← alpha·selfᵀ·other + beta·out`; used to accumulate weight gradients.
    pub fn matmul_tn_acc(&self, other: &Self, alpha: T, beta: T, out: &mut Self) -> Result<()> {
        if self.rows != other.rows {
            return Err(shape_err(
                "matmul_tn",
                format!("{}ᵀ", self.shape_str()),
                other.shape_str(),
            ));
        }
        if out.shape() != (self.cols, other.cols) {
            return Err(shape_err(
                "matmul_tn output",
                out.shape_str(),
                format!("[{}x{}]", self.cols, other.cols),
            ));
        }
        gemm(
            self.cols,
            self.rows,
            other.cols,
            alpha,
            View::transposed(self),
            View::normal(other),
            beta,
            &mut out.data,
        );
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Matrix{} ",
            format_args!("[{}x{}]", self.rows, self.cols)
        )?;
        if self.data.len() <= 64 {
            f.debug_list()
                .entries(self.data.chunks(self.cols.max(1)))
                .finish()
        } else {
            write!(f, "[..]")
        }
    }
}

/// Strided read-only operand for [`gemm`].
#[derive(Clone, Copy)]
struct View<'a, T> {
    data: &'a [T],
    rs: usize,
    cs: usize,
}

impl<'a, T> View<'a, T> {
    fn normal(m: &'a Matrix<T>) -> Self {
        Self {
            data: &m.data,
            rs: m.cols,
            cs: 1,
        }
    }

    fn transposed(m: &'a Matrix<T>) -> Self {
        Self {
            data: &m.data,
            rs: 1,
            cs: m.cols,
        }
    }
}

/// `C ← alpha·A·B + beta·C` with `C` dense row-major `m×n`, `A` viewed as
/// `m×k`, `B` as `k×n`. Large products are split into fixed row blocks.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: View<'_, T>,
    b: View<'_, T>,
    beta: T,
    c: &mut [T],
) {
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x = *x * beta);
        return;
    }
    assert!((m - 1) * a.rs + (k - 1) * a.cs < a.data.len());
    assert!((k - 1) * b.rs + (n - 1) * b.cs < b.data.len());

    let block = |row0: usize, cc: &mut [T]| {
        let rows = cc.len() / n;
        // SAFETY: bounds asserted above for the full operands; the block only
        // reads rows row0..row0+rows of A and writes its own slice of C.
        unsafe {
            T::gemm_raw(
                rows,
                k,
                n,
                alpha,
                a.data.as_ptr().add(row0 * a.rs),
                a.rs as isize,
                a.cs as isize,
                b.data.as_ptr(),
                b.rs as isize,
                b.cs as isize,
                beta,
                cc.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };

    if m > ROW_BLOCK && m.saturating_mul(n).saturating_mul(k) >= PAR_MIN_FLOPS {
        c.par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(i, cc)| block(i * ROW_BLOCK, cc));
    } else {
        block(0, c);
    }
}
