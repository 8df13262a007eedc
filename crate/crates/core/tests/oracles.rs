mod support;

use femap::eval::{self, MmdEstimator};
use femap::fem::{joint_loss, loss_ced, loss_mse, loss_pd, LossWeights};
use femap::kan::{bspline_basis, KanLayer, SplineGrid};
use femap::nn::Matrix;
use femap::rng;
use rand::Rng;
use support::{normal_vec, oracles, uniform_matrix, uniform_vec};

#[test]
fn basis_at_point_three_matches_textbook_recursion() {
    let grid = SplineGrid::default();
    let ours = bspline_basis(0.3f64, &grid);
    let reference = oracles::basis(5, 3, -1.0, 1.0, 0.3);
    assert_eq!(ours.len(), 8);
    for (t, (a, b)) in ours.iter().zip(&reference).enumerate() {
        assert!((a - b).abs() <= 1e-10, "B_{t}(0.3): {a} vs {b}");
    }
}

#[test]
fn basis_matches_recursion_across_grids_and_orders() {
    let mut r = rng::stream(3, "test.basis", 0);
    for (g, k, lo, hi) in [(5, 3, -1.0, 1.0), (3, 2, 0.0, 2.0), (8, 1, -2.0, 1.0), (4, 0, -1.0, 1.0), (6, 4, -0.5, 0.5)] {
        let grid = SplineGrid::new(g, k, lo, hi).unwrap();
        let span = hi - lo;
        for _ in 0..200 {
            // include the extended region beyond [lo, hi]
            let x: f64 = r.random_range(lo - 0.6 * span..hi + 0.6 * span);
            let ours = bspline_basis(x, &grid);
            let reference = oracles::basis(g, k, lo, hi, x);
            for (a, b) in ours.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-10, "G={g} k={k} x={x}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn kan_layer_matches_scalar_double_loop() {
    let mut r = rng::stream(11, "test.kan.oracle", 0);
    let layer = KanLayer::<f64>::new(3, 2, SplineGrid::default(), &mut r).unwrap();
    // spline coefficients of order one so both paths contribute visibly
    let mut layer = layer;
    layer.spline_weight = uniform_matrix(2, 3 * 8, -1.0, 1.0, &mut r);
    let probes = uniform_matrix(5, 3, -1.4, 1.4, &mut r);
    let ours = layer.forward(&probes).unwrap();
    let single = KanLayer::from_parts(layer.grid, layer.base_weight.cast::<f32>(), layer.spline_weight.cast::<f32>()).unwrap();
    let ours32 = single.forward(&probes.cast::<f32>()).unwrap();
    for b in 0..5 {
        let reference = oracles::kan_layer(&layer, probes.row(b));
        for j in 0..2 {
            assert!((ours[(b, j)] - reference[j]).abs() <= 1e-12);
            assert!((ours32[(b, j)] as f64 - reference[j]).abs() <= 1e-5, "f32 probe {b} out {j}");
        }
    }
}

#[test]
fn joint_loss_matches_compensated_reference_on_random_pairs() {
    let mut r = rng::stream(5, "test.loss.oracle", 0);
    let w = LossWeights::default();
    let (mut e_all, mut h_all) = (Vec::new(), Vec::new());
    let mut batch_total = Vec::new();
    for _ in 0..100 {
        let e = uniform_vec(8, -1.0, 1.0, &mut r);
        let h = uniform_vec(8, -1.0, 1.0, &mut r);
        let (mse, pd, ced, total) = oracles::pair_loss(&e, &h, (w.mse, w.pd, w.ced));
        assert!((loss_mse(&e, &h).unwrap() - mse).abs() <= 1e-9);
        assert!((loss_pd(&e, &h).unwrap() - pd).abs() <= 1e-9);
        assert!((loss_ced(&e, &h).unwrap() - ced).abs() <= 1e-9);
        let one = joint_loss(&Matrix::from_rows(&[&e]).unwrap(), &Matrix::from_rows(&[&h]).unwrap(), &w).unwrap();
        assert!((one.total - total).abs() <= 1e-6, "{} vs {}", one.total, total);
        // the f32 path, as used in training, against the same reference
        let one32 = joint_loss(
            &Matrix::from_rows(&[&e]).unwrap().cast::<f32>(),
            &Matrix::from_rows(&[&h]).unwrap().cast::<f32>(),
            &w,
        )
        .unwrap();
        let (e32, h32): (Vec<f64>, Vec<f64>) =
            (e.iter().map(|&v| v as f32 as f64).collect(), h.iter().map(|&v| v as f32 as f64).collect());
        assert!((one32.total - oracles::pair_loss(&e32, &h32, (1.0, 0.5, 10.0)).3).abs() <= 1e-6);
        batch_total.push(total);
        e_all.push(e);
        h_all.push(h);
    }
    let batch = joint_loss(&Matrix::from_rows(&e_all).unwrap(), &Matrix::from_rows(&h_all).unwrap(), &w).unwrap();
    let mean = oracles::exact_sum(batch_total.iter().copied()) / 100.0;
    assert!((batch.total - mean).abs() <= 1e-6);
}

#[test]
fn joint_loss_hand_case() {
    let e = Matrix::from_rows(&[[1.0f64, 0.0]]).unwrap();
    let h = Matrix::from_rows(&[[0.0f64, 1.0]]).unwrap();
    let l = joint_loss(&e, &h, &LossWeights::default()).unwrap();
    assert!((l.total - (11.0 + 0.5 * 2f64.sqrt())).abs() < 1e-12);
    assert!((l.total - 11.7071).abs() < 1e-4);
}

fn gaussian(n: usize, dim: usize, shift: f64, r: &mut rng::Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| normal_vec(dim, r).into_iter().map(|v| v + shift).collect()).collect()
}

#[test]
fn mmd_matches_double_loop_on_shifted_gaussians() {
    let mut r = rng::stream(9, "test.mmd", 0);
    let x = gaussian(500, 8, 0.0, &mut r);
    let y = gaussian(500, 8, 1.0, &mut r);
    let ours = eval::mmd(&Matrix::from_rows(&x).unwrap(), &Matrix::from_rows(&y).unwrap(), MmdEstimator::Biased).unwrap();
    let reference = oracles::mmd_biased(&x, &y);
    assert!((ours - reference).abs() <= 1e-9, "{ours} vs {reference}");
    assert!(ours > 0.05, "{ours}");
}

#[test]
fn mmd_of_identical_sets_is_exactly_zero() {
    let mut r = rng::stream(10, "test.mmd", 0);
    let x = Matrix::from_rows(&gaussian(50, 8, 0.0, &mut r)).unwrap();
    assert_eq!(eval::mmd(&x, &x, MmdEstimator::Biased).unwrap(), 0.0);
    let dup = Matrix::from_rows(&[[0.5f64, -1.0], [0.5, -1.0]]).unwrap();
    assert_eq!(eval::mmd(&dup, &dup, MmdEstimator::Biased).unwrap(), 0.0);
}

#[test]
fn threshold_on_hundredths_grid() {
    let scores: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    let t = eval::calibrate_threshold(&scores, 0.01).unwrap();
    assert_eq!(t.value, 0.98);
    assert_eq!(t.achieved_far, 0.01);
    assert_eq!(oracles::threshold_scan(&scores, 0.01), (0.98, 0.01));
}

#[test]
fn threshold_matches_brute_force_scan() {
    let mut r = rng::stream(12, "test.threshold", 0);
    for far in [0.5, 0.1, 0.05, 0.01, 0.003] {
        for n in [7usize, 100, 1001] {
            // symmetric scores, with ties
            let half: Vec<f64> = (0..n / 2).map(|_| (r.random_range(0.0..1.0f64) * 50.0).round() / 50.0).collect();
            let mut scores: Vec<f64> = half.iter().flat_map(|&v| [v, -v]).collect();
            if n % 2 == 1 {
                scores.push(0.0);
            }
            let t = eval::calibrate_threshold(&scores, far).unwrap();
            let (value, rate) = oracles::threshold_scan(&scores, far);
            assert_eq!(t.value, value, "far {far} n {n}");
            assert!((t.achieved_far - rate).abs() < 1e-15);
        }
    }
    let same = vec![0.3; 40];
    let t = eval::calibrate_threshold(&same, 0.01).unwrap();
    assert_eq!((t.value, t.achieved_far), (0.3, 0.0));
}

#[test]
fn cosine_matches_reference() {
    let mut r = rng::stream(13, "test.cosine", 0);
    for _ in 0..100 {
        let a = uniform_vec(16, -1.0, 1.0, &mut r);
        let b = uniform_vec(16, -1.0, 1.0, &mut r);
        assert!((eval::cosine(&a, &b).unwrap() - oracles::cosine(&a, &b)).abs() < 1e-12);
    }
}
