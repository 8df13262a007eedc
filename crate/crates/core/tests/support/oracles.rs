//! Independent reference implementations. Nothing here calls into the
//! library's numerical code; each follows the textbook definition directly.

use femap::kan::KanLayer;

/// Compensated (Neumaier) summation.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Textbook Cox–de Boor recursion `B_{j,p}(x)` on an explicit knot vector.
pub fn cox_de_boor(knots: &[f64], j: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return if knots[j] <= x && x < knots[j + 1] {
            1.0
        } else {
            0.0
        };
    }
    let left_den = knots[j + p] - knots[j];
    let right_den = knots[j + p + 1] - knots[j + 1];
    let left = if left_den == 0.0 {
        0.0
    } else {
        (x - knots[j]) / left_den * cox_de_boor(knots, j, p - 1, x)
    };
    let right = if right_den == 0.0 {
        0.0
    } else {
        (knots[j + p + 1] - x) / right_den * cox_de_boor(knots, j + 1, p - 1, x)
    };
    left + right
}

/// Uniform extended knots: `G + 2k + 1` points with spacing `(hi − lo)/G`, starting `k` steps below `lo`.
pub fn uniform_knots(g: usize, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let h = (hi - lo) / g as f64;
    (0..g + 2 * k + 1)
        .map(|i| lo + h * (i as f64 - k as f64))
        .collect()
}

/// All `G + k` basis values at `x`.
pub fn basis(g: usize, k: usize, lo: f64, hi: f64, x: f64) -> Vec<f64> {
    let knots = uniform_knots(g, k, lo, hi);
    (0..g + k).map(|j| cox_de_boor(&knots, j, k, x)).collect()
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// `out_j = Σ_i base[j,i]·silu(x_i) + Σ_i Σ_t spline[j,i,t]·B_t(x_i)`, one scalar at a time.
pub fn kan_layer(layer: &KanLayer<f64>, x: &[f64]) -> Vec<f64> {
    let g = layer.grid;
    let nb = g.grid_size + g.order;
    (0..layer.output_dim())
        .map(|j| {
            let mut acc = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                acc += layer.base_weight[(j, i)] * silu(xi);
                let b = basis(g.grid_size, g.order, g.lo, g.hi, xi);
                for t in 0..nb {
                    acc += layer.spline_weight[(j, i * nb + t)] * b[t];
                }
            }
            acc
        })
        .collect()
}

/// `(mse, pd, ced, total)` for one pair, compensated sums throughout.
pub fn pair_loss(e: &[f64], e_hat: &[f64], l: (f64, f64, f64)) -> (f64, f64, f64, f64) {
    let sq = exact_sum(e.iter().zip(e_hat).map(|(a, b)| (a - b) * (a - b)));
    let mse = sq / e.len() as f64;
    let pd = sq.sqrt();
    let dot = exact_sum(e.iter().zip(e_hat).map(|(a, b)| a * b));
    let ne = exact_sum(e.iter().map(|a| a * a)).sqrt();
    let nh = exact_sum(e_hat.iter().map(|a| a * a)).sqrt();
    let ced = 1.0 - dot / (ne * nh);
    (mse, pd, ced, l.0 * mse + l.1 * pd + l.2 * ced)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Median of all distinct-pair distances in `X ∪ Y` (mean of the two middle values when even).
pub fn median_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let all: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut d = Vec::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            d.push(dist(all[i], all[j]));
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    }
}

/// Biased MMD² with the RBF kernel `exp(−‖a−b‖² / 2σ²)`, σ the median distance.
pub fn mmd_biased(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let sigma = median_distance(x, y);
    let k = |a: &[f64], b: &[f64]| (-dist(a, b).powi(2) / (2.0 * sigma * sigma)).exp();
    let mean_k = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        let mut s = 0.0;
        for a in p {
            for b in q {
                s += k(a, b);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    (mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y)).max(0.0)
}

/// Scan every observed score as a candidate; the smallest with empirical FAR ≤ `far` wins.
pub fn threshold_scan(scores: &[f64], far: f64) -> (f64, f64) {
    let n = scores.len() as f64;
    let mut candidates = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    for &t in &candidates {
        let rate = scores.iter().filter(|&&s| s > t).count() as f64 / n;
        if rate <= far + 1e-12 {
            return (t, rate);
        }
    }
    unreachable!("the maximum always qualifies")
}

/// Plain cosine, for oracle use.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
