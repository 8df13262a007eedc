use crate::error::{shape_err, Error, Result};
use crate::nn::param::{join, Param, Trainable};
use crate::nn::Matrix;
use crate::scalar::{sc, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// 1D batch normalization over the feature columns of a `batch × features` input.
#[derive(Clone, Debug)]
pub struct BatchNorm1d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
}

/// Values saved by a train-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    xhat: Matrix<T>,
    inv_std: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![T::one(); features],
            beta: vec![T::zero(); features],
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            grad_gamma: vec![T::zero(); features],
            grad_beta: vec![T::zero(); features],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.features() {
            return Err(shape_err(
                "batchnorm",
                format!("input {}", x.shape_str()),
                format!("features [{}]", self.features()),
            ));
        }
        Ok(())
    }

    /// Mode dispatch; train mode updates the running statistics.
    pub fn forward(&mut self, x: &Matrix<T>, mode: BnMode) -> Result<Matrix<T>> {
        match mode {
            BnMode::Train => self.forward_train(x).map(|(y, _)| y),
            BnMode::Eval => self.forward_eval(x),
        }
    }

    /// Normalizes with running statistics only.
    pub fn forward_eval(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(x)?;
        let scale: Vec<f64> = self
            .gamma
            .iter()
            .zip(&self.running_var)
            .map(|(&g, &v)| g.to_f64c() / (v.to_f64c() + self.eps).sqrt())
            .collect();
        let mut y = x.clone();
        for b in 0..y.rows() {
            for (j, v) in y.row_mut(b).iter_mut().enumerate() {
                let centered = v.to_f64c() - self.running_mean[j].to_f64c();
                *v = sc(centered * scale[j] + self.beta[j].to_f64c());
            }
        }
        Ok(y)
    }

    /// Normalizes with batch statistics and returns the cache for [`backward`](Self::backward).
    pub fn forward_train(&mut self, x: &Matrix<T>) -> Result<(Matrix<T>, BnCache<T>)> {
        self.check(x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let f = self.features();
        let mut mean = vec![0.0f64; f];
        for row in x.iter_rows() {
            mean.iter_mut()
                .zip(row)
                .for_each(|(m, &v)| *m += v.to_f64c());
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; f];
        for row in x.iter_rows() {
            for j in 0..f {
                let d = row[j].to_f64c() - mean[j];
                var[j] += d * d;
            }
        }
        let sum_sq = var.clone();
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat = Matrix::zeros(n, f);
        let mut y = Matrix::zeros(n, f);
        for b in 0..n {
            for j in 0..f {
                let h = (x[(b, j)].to_f64c() - mean[j]) * inv_std[j];
                xhat[(b, j)] = sc(h);
                y[(b, j)] = sc(self.gamma[j].to_f64c() * h + self.beta[j].to_f64c());
            }
        }

        let m = self.momentum;
        for j in 0..f {
            let unbiased = sum_sq[j] / (n - 1) as f64;
            self.running_mean[j] = sc((1.0 - m) * self.running_mean[j].to_f64c() + m * mean[j]);
            self.running_var[j] = sc((1.0 - m) * self.running_var[j].to_f64c() + m * unbiased);
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    /// Accumulates `gamma`/`beta` gradients and returns the gradient wrt the input.
    pub fn backward(&mut self, cache: &BnCache<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        if grad_out.shape() != cache.xhat.shape() {
            return Err(shape_err(
                "batchnorm_backward",
                grad_out.shape_str(),
                cache.xhat.shape_str(),
            ));
        }
        let (n, f) = grad_out.shape();
        let mut sum_g = vec![0.0f64; f];
        let mut sum_gx = vec![0.0f64; f];
        for b in 0..n {
            for j in 0..f {
                let g = grad_out[(b, j)].to_f64c();
                sum_g[j] += g;
                sum_gx[j] += g * cache.xhat[(b, j)].to_f64c();
            }
        }
        for j in 0..f {
            self.grad_gamma[j] += sc(sum_gx[j]);
            self.grad_beta[j] += sc(sum_g[j]);
        }
        let nf = n as f64;
        let mut dx = Matrix::zeros(n, f);
        for b in 0..n {
            for j in 0..f {
                let gamma = self.gamma[j].to_f64c();
                let g = grad_out[(b, j)].to_f64c();
                let h = cache.xhat[(b, j)].to_f64c();
                // dxhat = g·γ; sums of dxhat are γ·sum_g and γ·sum_gx
                let v = gamma * cache.inv_std[j] / nf * (nf * g - sum_g[j] - h * sum_gx[j]);
                dx[(b, j)] = sc(v);
            }
        }
        Ok(dx)
    }
}

impl<T: Scalar> Trainable<T> for BatchNorm1d<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>)) {
        f(Param {
            name: join(prefix, "gamma"),
            value: &mut self.gamma,
            grad: &mut self.grad_gamma,
        });
        f(Param {
            name: join(prefix, "beta"),
            value: &mut self.beta,
            grad: &mut self.grad_beta,
        });
    }
}
