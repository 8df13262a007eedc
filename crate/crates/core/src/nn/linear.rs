use rand::Rng;

use crate::error::{shape_err, Result};
use crate::nn::param::{join, Param, Trainable};
use crate::nn::Matrix;
use crate::scalar::{sc, Scalar};

/// Fully connected layer, `y = x·Wᵀ + b`.
#[derive(Clone, Debug)]
pub struct LinearLayer<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub grad_weight: Matrix<T>,
    pub grad_bias: Vec<T>,
}

/// Uniform bound of the framework-default Kaiming-uniform init (`a = √5`),
/// which reduces to `1/√fan_in`.
pub fn kaiming_uniform_bound(fan_in: usize) -> f64 {
    let gain = (2.0f64 / (1.0 + 5.0)).sqrt();
    gain * (3.0 / fan_in as f64).sqrt()
}

pub(crate) fn kaiming_uniform<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Matrix<T> {
    let bound = kaiming_uniform_bound(cols);
    Matrix::from_fn(rows, cols, |_, _| sc(rng.random_range(-bound..bound)))
}

impl<T: Scalar> LinearLayer<T> {
    pub fn from_parts(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(shape_err(
                "linear bias",
                weight.shape_str(),
                format!("[{}]", bias.len()),
            ));
        }
        Ok(Self {
            grad_weight: Matrix::zeros(weight.rows(), weight.cols()),
            grad_bias: vec![T::zero(); bias.len()],
            weight,
            bias,
        })
    }

    /// Kaiming-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self::from_parts(kaiming_uniform(output, input, rng), vec![T::zero(); output])
            .expect("consistent shapes")
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return Err(shape_err(
                "linear_forward",
                format!("input {}", x.shape_str()),
                format!("weight {}", self.weight.shape_str()),
            ));
        }
        let mut y = x.matmul_nt(&self.weight)?;
        y.add_row_vector(&self.bias)?;
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the gradient wrt `x`.
    pub fn backward(&mut self, x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        if grad_out.rows() != x.rows()
            || grad_out.cols() != self.output_dim()
            || x.cols() != self.input_dim()
        {
            return Err(shape_err(
                "linear_backward",
                format!("input {} grad {}", x.shape_str(), grad_out.shape_str()),
                format!("weight {}", self.weight.shape_str()),
            ));
        }
        grad_out.matmul_tn_acc(x, T::one(), T::one(), &mut self.grad_weight)?;
        for (g, s) in self.grad_bias.iter_mut().zip(grad_out.column_sums()) {
            *g += s;
        }
        grad_out.matmul(&self.weight)
    }
}

impl<T: Scalar> Trainable<T> for LinearLayer<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>)) {
        f(Param {
            name: join(prefix, "weight"),
            value: self.weight.as_mut_slice(),
            grad: self.grad_weight.as_mut_slice(),
        });
        f(Param {
            name: join(prefix, "bias"),
            value: &mut self.bias,
            grad: &mut self.grad_bias,
        });
    }
}
