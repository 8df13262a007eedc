use rand::Rng;

use crate::error::{shape_err, Result};
use crate::kan::SplineGrid;
use crate::nn::linear::kaiming_uniform;
use crate::nn::param::{join, Param, Trainable};
use crate::nn::{silu, silu_grad, Matrix};
use crate::scalar::{sc, Scalar};

/// Kolmogorov–Arnold layer: every edge `i → j` carries the learnable function
/// `φ_ji(x) = base_ji·silu(x) + Σ_t spline_jit·B_t(x)`, and each output sums
/// its incoming edges.
#[derive(Clone, Debug)]
pub struct KanLayer<T> {
    pub grid: SplineGrid,
    /// `[out × in]`
    pub base_weight: Matrix<T>,
    /// `[out × (in·(G+k))]`, i.e. the `out × in × (G+k)` tensor flattened row-major.
    pub spline_weight: Matrix<T>,
    pub grad_base: Matrix<T>,
    pub grad_spline: Matrix<T>,
}

impl<T: Scalar> KanLayer<T> {
    pub fn from_parts(
        grid: SplineGrid,
        base_weight: Matrix<T>,
        spline_weight: Matrix<T>,
    ) -> Result<Self> {
        grid.validate()?;
        let (out, input) = base_weight.shape();
        if spline_weight.shape() != (out, input * grid.num_basis()) {
            return Err(shape_err(
                "kan spline_weight",
                spline_weight.shape_str(),
                format!("[{}x{}]", out, input * grid.num_basis()),
            ));
        }
        Ok(Self {
            grid,
            grad_base: Matrix::zeros(out, input),
            grad_spline: Matrix::zeros(out, input * grid.num_basis()),
            base_weight,
            spline_weight,
        })
    }

    /// Kaiming-uniform base weights; spline coefficients uniform in
    /// `±0.05/G` (noise of total width `0.1/G`).
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        grid: SplineGrid,
        rng: &mut R,
    ) -> Result<Self> {
        grid.validate()?;
        let base = kaiming_uniform(output, input, rng);
        let half = 0.5 * 0.1 / grid.grid_size as f64;
        let spline = Matrix::from_fn(output, input * grid.num_basis(), |_, _| {
            sc(rng.random_range(-half..half))
        });
        Self::from_parts(grid, base, spline)
    }

    pub fn input_dim(&self) -> usize {
        self.base_weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.base_weight.rows()
    }

    pub fn spline(&self, out: usize, input: usize, t: usize) -> T {
        self.spline_weight[(out, input * self.grid.num_basis() + t)]
    }

    fn check(&self, x: &Matrix<T>, op: &'static str) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(shape_err(
                op,
                format!("input {}", x.shape_str()),
                format!("layer [{} -> {}]", self.input_dim(), self.output_dim()),
            ));
        }
        Ok(())
    }

    /// Basis features `[batch × in·(G+k)]`, optionally with their derivatives.
    fn features(&self, x: &Matrix<T>, with_derivative: bool) -> (Matrix<T>, Option<Matrix<T>>) {
        let nb = self.grid.num_basis();
        let (batch, input) = x.shape();
        let mut feat = Matrix::zeros(batch, input * nb);
        let mut dfeat = with_derivative.then(|| Matrix::zeros(batch, input * nb));
        let mut scratch = vec![T::zero(); self.grid.scratch_len()];
        let mut dummy = vec![T::zero(); nb];
        for b in 0..batch {
            let xr = x.row(b);
            let fr = feat.row_mut(b);
            match dfeat.as_mut() {
                Some(d) => {
                    let dr = d.row_mut(b);
                    for i in 0..input {
                        self.grid.basis_and_derivative_into(
                            xr[i],
                            &mut fr[i * nb..(i + 1) * nb],
                            &mut dr[i * nb..(i + 1) * nb],
                            &mut scratch,
                        );
                    }
                }
                None => {
                    for i in 0..input {
                        self.grid.basis_and_derivative_into(
                            xr[i],
                            &mut fr[i * nb..(i + 1) * nb],
                            &mut dummy,
                            &mut scratch,
                        );
                    }
                }
            }
        }
        (feat, dfeat)
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(x, "kan_layer_forward")?;
        let (feat, _) = self.features(x, false);
        let mut y = x.map(silu).matmul_nt(&self.base_weight)?;
        let spline = feat.matmul_nt(&self.spline_weight)?;
        y.add_assign(&spline)?;
        Ok(y)
    }

    /// Accumulates base and spline gradients; returns the gradient wrt `x`.
    pub fn backward(&mut self, x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(x, "kan_layer_backward")?;
        if grad_out.shape() != (x.rows(), self.output_dim()) {
            return Err(shape_err(
                "kan_layer_backward",
                format!("grad {}", grad_out.shape_str()),
                format!("[{}x{}]", x.rows(), self.output_dim()),
            ));
        }
        let nb = self.grid.num_basis();
        let (feat, dfeat) = self.features(x, true);
        let dfeat = dfeat.expect("derivatives requested");
        let act = x.map(silu);

        grad_out.matmul_tn_acc(&act, T::one(), T::one(), &mut self.grad_base)?;
        grad_out.matmul_tn_acc(&feat, T::one(), T::one(), &mut self.grad_spline)?;

        let g_act = grad_out.matmul(&self.base_weight)?;
        let g_feat = grad_out.matmul(&self.spline_weight)?;
        let mut gx = Matrix::zeros(x.rows(), x.cols());
        for b in 0..x.rows() {
            let (xr, ga, gf, df) = (x.row(b), g_act.row(b), g_feat.row(b), dfeat.row(b));
            for (i, g) in gx.row_mut(b).iter_mut().enumerate() {
                let mut acc = ga[i] * silu_grad(xr[i]);
                for t in 0..nb {
                    acc += gf[i * nb + t] * df[i * nb + t];
                }
                *g = acc;
            }
        }
        Ok(gx)
    }
}

impl<T: Scalar> Trainable<T> for KanLayer<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>)) {
        f(Param {
            name: join(prefix, "base_weight"),
            value: self.base_weight.as_mut_slice(),
            grad: self.grad_base.as_mut_slice(),
        });
        f(Param {
            name: join(prefix, "spline_weight"),
            value: self.spline_weight.as_mut_slice(),
            grad: self.grad_spline.as_mut_slice(),
        });
    }
}
