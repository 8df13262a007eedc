//! Analytic backward passes against central differences, all in f64.
//!
//! Each check builds the scalar objective `L = Σ w ⊙ f(x)` for a fixed random
//! upstream `w` (or the joint loss, for whole models) and returns the worst
//! relative error over parameters and inputs. Differences use the five-point
//! stencil at `h = 1e-4`; the three-point one leaves O(h²) truncation error
//! that exceeds 1e-4 relative wherever a small gradient meets large curvature.

use femap::fem::{joint_loss, joint_loss_with_grad, FemConfig, FemModel, LossWeights, Variant};
use femap::kan::{KanLayer, SplineGrid};
use femap::nn::gradcheck::relative_error;
use femap::nn::{
    gelu_backward, gelu_forward, grad_check_with, silu_backward, silu_forward, BatchNorm1d,
    LinearLayer, Matrix, Stencil, Trainable,
};
use femap::rng;

use super::{uniform_matrix, uniform_vec};

pub const TOLERANCE: f64 = 1e-4;

fn weighted(y: &Matrix<f64>, w: &Matrix<f64>) -> f64 {
    y.as_slice()
        .iter()
        .zip(w.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

fn matrix_like(m: &Matrix<f64>, data: &[f64]) -> Matrix<f64> {
    Matrix::from_vec(m.rows(), m.cols(), data.to_vec()).unwrap()
}

/// Below this magnitude a gradient is not resolved by `h = 1e-4` central
/// differences of an O(10) objective in f64 (roundoff is around 1e-11),
/// so such coordinates are held to an absolute bound instead.
pub const RESOLUTION: f64 = 1e-6;
/// Agreement required for coordinates under [`RESOLUTION`].
pub const ABSOLUTE_TOLERANCE: f64 = 1e-9;

/// Worst error over coordinates: relative where the gradient is resolvable,
/// and infinite if an unresolvable one disagrees beyond [`ABSOLUTE_TOLERANCE`].
pub fn score(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        if a.abs().max(n.abs()) < RESOLUTION {
            if (a - n).abs() > ABSOLUTE_TOLERANCE {
                return f64::INFINITY;
            }
        } else {
            worst = worst.max(relative_error(a, n));
        }
    }
    worst
}

/// Error of the parameter gradients and the input gradient.
fn check_both<M: Trainable<f64> + Clone>(
    module: &M,
    analytic_params: &[f64],
    x: &Matrix<f64>,
    analytic_x: &Matrix<f64>,
    objective: impl Fn(&mut M, &Matrix<f64>) -> f64,
) -> f64 {
    let p0 = module.clone().params_flat();
    let rp = grad_check_with(
        |p| {
            let mut m = module.clone();
            m.set_params_flat(p);
            Ok(objective(&mut m, x))
        },
        &p0,
        analytic_params,
        TOLERANCE,
        Stencil::FivePoint,
    )
    .unwrap();
    let rx = grad_check_with(
        |xf| Ok(objective(&mut module.clone(), &matrix_like(x, xf))),
        x.as_slice(),
        analytic_x.as_slice(),
        TOLERANCE,
        Stencil::FivePoint,
    )
    .unwrap();
    score(analytic_params, &rp.numeric).max(score(analytic_x.as_slice(), &rx.numeric))
}

fn randomize<M: Trainable<f64>>(m: &mut M, r: &mut rng::Rng, lo: f64, hi: f64) {
    let n = m.param_count();
    m.set_params_flat(&uniform_vec(n, lo, hi, r));
}

/// Batch 4, 8 inputs, 4 outputs.
pub fn linear(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.linear", 0);
    let mut layer = LinearLayer::<f64>::new(8, 4, &mut r);
    randomize(&mut layer, &mut r, -1.0, 1.0);
    let x = uniform_matrix(4, 8, -1.0, 1.0, &mut r);
    let w = uniform_matrix(4, 4, -1.0, 1.0, &mut r);
    layer.zero_grad();
    let gx = layer.backward(&x, &w).unwrap();
    let gp = layer.grads_flat();
    check_both(&layer, &gp, &x, &gx, |l, x| {
        weighted(&l.forward(x).unwrap(), &w)
    })
}

pub fn gelu(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.gelu", 0);
    let x = uniform_matrix(4, 6, -3.0, 3.0, &mut r);
    let w = uniform_matrix(4, 6, -1.0, 1.0, &mut r);
    let gx = gelu_backward(&x, &w);
    let r = grad_check_with(
        |xf| Ok(weighted(&gelu_forward(&matrix_like(&x, xf)), &w)),
        x.as_slice(),
        gx.as_slice(),
        TOLERANCE,
        Stencil::FivePoint,
    )
    .unwrap();
    score(gx.as_slice(), &r.numeric)
}

pub fn silu(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.silu", 0);
    let x = uniform_matrix(4, 6, -4.0, 4.0, &mut r);
    let w = uniform_matrix(4, 6, -1.0, 1.0, &mut r);
    let gx = silu_backward(&x, &w);
    let r = grad_check_with(
        |xf| Ok(weighted(&silu_forward(&matrix_like(&x, xf)), &w)),
        x.as_slice(),
        gx.as_slice(),
        TOLERANCE,
        Stencil::FivePoint,
    )
    .unwrap();
    score(gx.as_slice(), &r.numeric)
}

/// Train mode, batch 8, 4 features.
pub fn batchnorm(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.batchnorm", 0);
    let mut bn = BatchNorm1d::<f64>::new(4);
    randomize(&mut bn, &mut r, 0.5, 1.5);
    let x = uniform_matrix(8, 4, -2.0, 2.0, &mut r);
    let w = uniform_matrix(8, 4, -1.0, 1.0, &mut r);
    let start = bn.clone();
    bn.zero_grad();
    let (_, cache) = bn.forward_train(&x).unwrap();
    let gx = bn.backward(&cache, &w).unwrap();
    let gp = bn.grads_flat();
    check_both(&start, &gp, &x, &gx, |m, x| {
        weighted(&m.forward_train(x).unwrap().0, &w)
    })
}

/// Batch 4, 3 inputs, 2 outputs; inputs straddle the grid range.
pub fn kan_layer(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.kan", 0);
    let mut layer = KanLayer::<f64>::new(3, 2, SplineGrid::default(), &mut r).unwrap();
    randomize(&mut layer, &mut r, -1.0, 1.0);
    let x = uniform_matrix(4, 3, -1.3, 1.3, &mut r);
    let w = uniform_matrix(4, 2, -1.0, 1.0, &mut r);
    layer.zero_grad();
    let gx = layer.backward(&x, &w).unwrap();
    let gp = layer.grads_flat();
    check_both(&layer, &gp, &x, &gx, |l, x| {
        weighted(&l.forward(x).unwrap(), &w)
    })
}

/// Joint loss (paper weights) through a whole 4-dim FEM in training mode.
pub fn fem_loss(variant: Variant, seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.fem", 0);
    let config = FemConfig::with_widths(&[4, 6, 4]);
    let mut model = FemModel::<f64>::build(variant, &config, seed).unwrap();
    // Fresh inits map to near-zero outputs, where the cosine term's curvature
    // swamps h = 1e-4 differences; spread the parameters out instead.
    randomize(&mut model, &mut r, -0.5, 0.5);
    fem_loss_of(model, seed)
}

pub fn fem_loss_of(mut model: FemModel<f64>, seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.fem.data", 0);
    let d = model.embedding_dim;
    let x = uniform_matrix(6, d, -0.6, 0.6, &mut r);
    let target = uniform_matrix(6, d, -0.6, 0.6, &mut r);
    let w = LossWeights::default();
    let start = model.clone();
    model.zero_grad();
    let (pred, trace) = model.forward_train(&x).unwrap();
    let (_, g) = joint_loss_with_grad(&target, &pred, &w).unwrap();
    let gx = model.backward(&trace, &g).unwrap();
    let gp = model.grads_flat();
    check_both(&start, &gp, &x, &gx, |m, x| {
        let (pred, _) = m.forward_train(x).unwrap();
        joint_loss(&target, &pred, &w).unwrap().total
    })
}

/// Gradient of the joint loss wrt the prediction alone.
pub fn joint_loss_wrt_prediction(seed: u64) -> f64 {
    let mut r = rng::stream(seed, "test.grad.loss", 0);
    let e = uniform_matrix(5, 8, -1.0, 1.0, &mut r);
    let e_hat = uniform_matrix(5, 8, -1.0, 1.0, &mut r);
    let w = LossWeights::default();
    let (_, g) = joint_loss_with_grad(&e, &e_hat, &w).unwrap();
    let r = grad_check_with(
        |p| Ok(joint_loss(&e, &matrix_like(&e_hat, p), &w)?.total),
        e_hat.as_slice(),
        g.as_slice(),
        TOLERANCE,
        Stencil::FivePoint,
    )
    .unwrap();
    score(g.as_slice(), &r.numeric)
}

/// Every check above over `seeds`, as `(name, worst error)` rows.
pub fn suite(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64)> {
    type Check = Box<dyn Fn(u64) -> f64>;
    let checks: Vec<(&'static str, Check)> = vec![
        ("linear", Box::new(linear)),
        ("gelu", Box::new(gelu)),
        ("silu", Box::new(silu)),
        ("batchnorm", Box::new(batchnorm)),
        ("kan_layer", Box::new(kan_layer)),
        ("joint_loss", Box::new(joint_loss_wrt_prediction)),
        ("fem_mlp_loss", Box::new(|s| fem_loss(Variant::Mlp, s))),
        ("fem_kan_loss", Box::new(|s| fem_loss(Variant::Kan, s))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| (name, seeds.clone().map(&f).fold(0.0, f64::max)))
        .collect()
}
