//! Template protection schemes: PolyProtect and MLP-Hash.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::rng;
use crate::scalar::{sc, Scalar};

/// Largest coefficient magnitude and exponent used by [`polyprotect_gen`].
pub const POLY_COEFF_MAX: i32 = 50;
pub const POLY_EXP_MAX: u32 = 5;

/// User-specific PolyProtect mapping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyProtectParams {
    /// Nonzero integer coefficients, one per window position.
    pub c: Vec<i32>,
    /// Exponents, one per window position.
    pub e: Vec<u32>,
    /// Number of values shared by consecutive windows.
    pub overlap: usize,
}

impl PolyProtectParams {
    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn step(&self) -> usize {
        self.m() - self.overlap
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.c.len();
        if m == 0 || self.e.len() != m {
            return Err(Error::InvalidArgument(format!(
                "PolyProtect needs |C| = |E| > 0, got {} and {}",
                m,
                self.e.len()
            )));
        }
        if self.overlap >= m {
            return Err(Error::InvalidArgument(format!(
                "overlap {} must be below m = {m}",
                self.overlap
            )));
        }
        if self.c.iter().any(|&c| c == 0 || c.abs() > POLY_COEFF_MAX) {
            return Err(Error::InvalidArgument(format!(
                "coefficients must be nonzero in [-50, 50]: {:?}",
                self.c
            )));
        }
        if self.e.iter().any(|&e| !(1..=POLY_EXP_MAX).contains(&e)) {
            return Err(Error::InvalidArgument(format!(
                "exponents must lie in [1, 5]: {:?}",
                self.e
            )));
        }
        Ok(())
    }

    /// Output length for an `n`-dimensional input.
    pub fn output_len(&self, n: usize) -> Result<usize> {
        if n < self.m() {
            return Err(Error::InvalidArgument(format!(
                "input length {n} shorter than window m = {}",
                self.m()
            )));
        }
        Ok((n - self.m()) / self.step() + 1)
    }
}

/// Draw user-specific parameters with `m = 5` and `overlap = 4`.
pub fn polyprotect_gen(seed: u64) -> PolyProtectParams {
    polyprotect_gen_with(seed, 5, 4).expect("default window is valid")
}

/// Draw parameters for window size `m ≤ 5`: coefficients uniform over the
/// nonzero integers in `[-50, 50]`, exponents `m` distinct values of `1..=5`
/// in random order.
pub fn polyprotect_gen_with(seed: u64, m: usize, overlap: usize) -> Result<PolyProtectParams> {
    if m == 0 || m > POLY_EXP_MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "window m = {m} must lie in [1, 5] for distinct exponents"
        )));
    }
    let mut r = rng::stream(seed, "protect.polyprotect", 0);
    let c = (0..m)
        .map(|_| {
            let v = r.random_range(1..=2 * POLY_COEFF_MAX);
            if v <= POLY_COEFF_MAX {
                v - POLY_COEFF_MAX - 1
            } else {
                v - POLY_COEFF_MAX
            }
        })
        .collect();
    let mut e: Vec<u32> = (1..=POLY_EXP_MAX).collect();
    e.shuffle(&mut r);
    e.truncate(m);
    let p = PolyProtectParams { c, e, overlap };
    p.validate()?;
    Ok(p)
}

/// `p_j = Σ_k c_k · v_{js+k}^{e_k}` over windows of `m` values taken with step
/// `s = m − overlap`.
pub fn polyprotect<T: Scalar>(v: &[T], params: &PolyProtectParams) -> Result<Vec<T>> {
    params.validate()?;
    let len = params.output_len(v.len())?;
    let step = params.step();
    Ok((0..len)
        .map(|j| {
            let w = &v[j * step..j * step + params.m()];
            let p: f64 = w
                .iter()
                .zip(params.c.iter().zip(&params.e))
                .map(|(&x, (&c, &e))| c as f64 * x.to_f64c().powi(e as i32))
                .sum();
            sc(p)
        })
        .collect())
}

/// Sequential Gram-Schmidt on the rows of `m`, computed in `f64`.
///
/// Each row is projected against all previous rows twice, which keeps the
/// result orthonormal to rounding level even for the badly conditioned
/// all-positive matrices MLP-Hash starts from.
pub fn gram_schmidt_rows<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let (rows, cols) = m.shape();
    let mut q: Vec<f64> = m.as_slice().iter().map(|x| x.to_f64c()).collect();
    for i in 0..rows {
        let (done, rest) = q.split_at_mut(i * cols);
        let row = &mut rest[..cols];
        for _pass in 0..2 {
            for prev in done.chunks_exact(cols) {
                let d: f64 = prev.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                row.iter_mut().zip(prev).for_each(|(r, p)| *r -= d * p);
            }
        }
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n >= 1e-10) {
            return Err(Error::Degenerate { row: i, norm: n });
        }
        row.iter_mut().for_each(|x| *x /= n);
    }
    Matrix::from_vec(rows, cols, q.into_iter().map(sc).collect())
}

/// MLP-Hash configuration shared by all identities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHashParams {
    pub seed: u64,
    /// Output width of each pseudo-random layer.
    pub layer_widths: Vec<usize>,
    /// Binarization threshold: `0` where the value is `≤ τ`, else `1`.
    pub tau: f64,
}

impl Default for MlpHashParams {
    fn default() -> Self {
        Self {
            seed: 0,
            layer_widths: vec![512],
            tau: 0.0,
        }
    }
}

/// Frozen MLP-Hash projections: one orthonormalized `in × out` matrix per layer.
#[derive(Clone, Debug)]
pub struct MlpHash {
    pub params: MlpHashParams,
    layers: Vec<Matrix<f64>>,
}

impl MlpHash {
    /// Generate the projections for `input_dim`-dimensional embeddings.
    ///
    /// Layer `ℓ` draws a uniform `[0, 1]` matrix from the seed and
    /// orthonormalizes its rows. Rows index the input, so a layer narrower
    /// than its input has more rows than dimensions and is rejected as
    /// degenerate.
    pub fn new(params: MlpHashParams, input_dim: usize) -> Result<Self> {
        if params.layer_widths.is_empty() || params.layer_widths.contains(&0) || input_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid MLP-Hash widths {:?} for input {input_dim}",
                params.layer_widths
            )));
        }
        if !params.tau.is_finite() {
            return Err(Error::InvalidArgument(
                "MLP-Hash threshold must be finite".into(),
            ));
        }
        let mut layers = Vec::with_capacity(params.layer_widths.len());
        let mut fan_in = input_dim;
        for (l, &w) in params.layer_widths.iter().enumerate() {
            let mut r = rng::stream(params.seed, "protect.mlphash", l as u64);
            let raw = Matrix::from_fn(fan_in, w, |_, _| r.random::<f64>());
            layers.push(gram_schmidt_rows(&raw)?);
            fan_in = w;
        }
        Ok(Self { params, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }

    /// The orthonormalized projection of each layer.
    pub fn projections(&self) -> &[Matrix<f64>] {
        &self.layers
    }

    /// Real-valued output before binarization, `F(… F(V × M⊥₁) … × M⊥ₗ)`.
    pub fn project<T: Scalar>(&self, v: &[T]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(shape_err(
                "mlphash",
                format!("[{}]", v.len()),
                format!("[{}]", self.input_dim()),
            ));
        }
        let mut h: Vec<f64> = v.iter().map(|x| x.to_f64c()).collect();
        for m in &self.layers {
            let mut out = vec![0.0; m.cols()];
            for (hi, row) in h.iter().zip(m.iter_rows()) {
                out.iter_mut().zip(row).for_each(|(o, w)| *o += hi * w);
            }
            out.iter_mut().for_each(|x| *x = x.max(0.0));
            h = out;
        }
        Ok(h)
    }

    /// Binarized protected embedding.
    pub fn hash<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        let tau = self.params.tau;
        Ok(self
            .project(v)?
            .into_iter()
            .map(|x| if x <= tau { T::zero() } else { T::one() })
            .collect())
    }
}

/// One-shot MLP-Hash of a single embedding.
pub fn mlphash<T: Scalar>(v: &[T], params: &MlpHashParams) -> Result<Vec<T>> {
    MlpHash::new(params.clone(), v.len())?.hash(v)
}

/// Append zeros up to `target` entries.
pub fn pad_to_dim<T: Scalar>(p: &[T], target: usize) -> Result<Vec<T>> {
    if p.len() > target {
        return Err(Error::InvalidArgument(format!(
            "cannot pad {} values down to {target}",
            p.len()
        )));
    }
    let mut out = p.to_vec();
    out.resize(target, T::zero());
    Ok(out)
}
