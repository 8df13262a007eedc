//! Verification metrics in embedding space: cosine scores, FAR-calibrated
//! thresholds, attack success rate, similarity histograms and MMD.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::rng;
use crate::scalar::{dot, Scalar};

pub const DEFAULT_FAR: f64 = 0.01;
pub const DEFAULT_IMPOSTOR_PAIRS: usize = 100_000;
pub const HISTOGRAM_BINS: usize = 50;

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err(
            "cosine",
            format!("[{}]", a.len()),
            format!("[{}]", b.len()),
        ));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine of each row of `a` with the same row of `b`.
pub fn paired_cosines<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(shape_err("paired_cosines", a.shape_str(), b.shape_str()));
    }
    a.iter_rows()
        .zip(b.iter_rows())
        .map(|(x, y)| cosine(x, y))
        .collect()
}

/// Operating point chosen on impostor scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationThreshold {
    pub value: f64,
    pub far_target: f64,
    /// Fraction of calibration scores strictly above `value`.
    pub achieved_far: f64,
    pub calibration_size: usize,
}

/// Smallest observed score `t` with `#{s > t} / n ≤ far`.
pub fn calibrate_threshold(impostor_scores: &[f64], far: f64) -> Result<VerificationThreshold> {
    if impostor_scores.is_empty() {
        return Err(Error::InvalidArgument(
            "no impostor scores to calibrate on".into(),
        ));
    }
    if !(far > 0.0 && far < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "FAR target {far} outside (0, 1)"
        )));
    }
    if impostor_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite impostor score".into()));
    }
    let mut s = impostor_scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    // Tolerance keeps e.g. 0.01·100 from rounding just below 1.
    let allowed = (far * n as f64 + 1e-9).floor() as usize;
    let mut i = 0;
    loop {
        let t = s[i];
        let above = n - s.partition_point(|&x| x <= t);
        if above <= allowed {
            return Ok(VerificationThreshold {
                value: t,
                far_target: far,
                achieved_far: above as f64 / n as f64,
                calibration_size: n,
            });
        }
        i = s.partition_point(|&x| x <= t);
    }
}

/// Fraction of `scores` strictly above `threshold`.
pub fn false_accept_rate(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64
}

/// Cosines of `count` uniformly drawn cross-identity pairs.
pub fn sample_impostor_scores<T: Scalar>(
    embeddings: &Matrix<T>,
    labels: &[u32],
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if labels.len() != embeddings.rows() {
        return Err(shape_err(
            "impostor sampling",
            format!("{} labels", labels.len()),
            format!("{} embeddings", embeddings.rows()),
        ));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::InvalidArgument(
            "impostor pairs need at least two identities".into(),
        ));
    }
    let n = labels.len();
    let mut r = rng::stream(seed, "calibration", 0);
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let (i, j) = (r.random_range(0..n), r.random_range(0..n));
        if labels[i] != labels[j] {
            pairs.push((i, j));
        }
    }
    pairs
        .par_iter()
        .map(|&(i, j)| cosine(embeddings.row(i), embeddings.row(j)))
        .collect()
}

/// Cosines of every same-identity pair `i < j` within one embedding set.
pub fn genuine_pair_scores<T: Scalar>(embeddings: &Matrix<T>, labels: &[u32]) -> Result<Vec<f64>> {
    if labels.len() != embeddings.rows() {
        return Err(shape_err(
            "genuine pairs",
            format!("{} labels", labels.len()),
            format!("{} embeddings", embeddings.rows()),
        ));
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut out = Vec::new();
    for idx in groups.values() {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                out.push(cosine(embeddings.row(i), embeddings.row(j))?);
            }
        }
    }
    Ok(out)
}

/// Fixed-bin histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Values outside `[lo, hi]` land in the end bins; `hi` itself goes in the last bin.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let mut counts = vec![0u64; bins];
        for &v in values {
            let b = ((v - lo) / (hi - lo) * bins as f64).floor();
            let b = if b.is_nan() {
                0
            } else {
                (b.max(0.0) as usize).min(bins - 1)
            };
            counts[b] += 1;
        }
        Self { lo, hi, counts }
    }

    /// The 50-bin cosine histogram over `[-1, 1]`.
    pub fn cosine(values: &[f64]) -> Self {
        Self::new(values, HISTOGRAM_BINS, -1.0, 1.0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Distribution summary of genuine-pair cosines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl SimilaritySummary {
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidArgument("no scores to summarize".into()));
        }
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Ok(Self {
            count: n,
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            min: s[0],
            max: s[n - 1],
            histogram: Histogram::cosine(scores),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityOutcome {
    pub label: u32,
    pub attempts: usize,
    pub successes: usize,
}

/// Attack success at one threshold. Every probe is one attempt; the
/// per-identity rate counts an identity as broken if any of its probes passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrOutcome {
    pub threshold: f64,
    pub attempts: usize,
    pub successes: usize,
    pub asr: f64,
    pub identities: usize,
    pub identities_broken: usize,
    pub identity_success_rate: f64,
    pub per_identity: Vec<IdentityOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub similarity: SimilaritySummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<VerificationThreshold>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asr: Option<AsrOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd: Option<f64>,
    /// Genuine-pair cosine per probe, in input order.
    #[serde(skip)]
    pub scores: Vec<f64>,
}

fn check_alignment<T: Scalar>(
    mapped: &Matrix<T>,
    enrolled: &Matrix<T>,
    labels: &[u32],
) -> Result<()> {
    if mapped.shape() != enrolled.shape() {
        return Err(shape_err(
            "probe/enrolled",
            mapped.shape_str(),
            enrolled.shape_str(),
        ));
    }
    if labels.len() != mapped.rows() {
        return Err(shape_err(
            "labels",
            format!("{} labels", labels.len()),
            format!("{} probes", mapped.rows()),
        ));
    }
    Ok(())
}

/// Genuine-pair similarity statistics: row `i` of `mapped` against row `i` of `enrolled`.
pub fn similarity_report<T: Scalar>(
    mapped: &Matrix<T>,
    enrolled: &Matrix<T>,
    labels: &[u32],
) -> Result<MetricsReport> {
    check_alignment(mapped, enrolled, labels)?;
    let scores = paired_cosines(mapped, enrolled)?;
    Ok(MetricsReport {
        similarity: SimilaritySummary::from_scores(&scores)?,
        threshold: None,
        asr: None,
        mmd: None,
        scores,
    })
}

/// Count successes of aligned probes at `threshold.value` (`cos ≥ t` passes).
pub fn asr<T: Scalar>(
    mapped: &Matrix<T>,
    enrolled: &Matrix<T>,
    labels: &[u32],
    threshold: &VerificationThreshold,
) -> Result<MetricsReport> {
    let mut report = similarity_report(mapped, enrolled, labels)?;
    report.asr = Some(asr_from_scores(&report.scores, labels, threshold.value)?);
    report.threshold = Some(threshold.clone());
    Ok(report)
}

/// ASR from precomputed genuine scores.
pub fn asr_from_scores(scores: &[f64], labels: &[u32], threshold: f64) -> Result<AsrOutcome> {
    if scores.len() != labels.len() {
        return Err(shape_err(
            "asr",
            format!("{} scores", scores.len()),
            format!("{} labels", labels.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no probes".into()));
    }
    let mut by_id: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut successes = 0;
    for (&s, &l) in scores.iter().zip(labels) {
        let e = by_id.entry(l).or_default();
        e.0 += 1;
        if s >= threshold {
            e.1 += 1;
            successes += 1;
        }
    }
    let per_identity: Vec<IdentityOutcome> = by_id
        .into_iter()
        .map(|(label, (attempts, successes))| IdentityOutcome {
            label,
            attempts,
            successes,
        })
        .collect();
    let broken = per_identity.iter().filter(|o| o.successes > 0).count();
    Ok(AsrOutcome {
        threshold,
        attempts: scores.len(),
        successes,
        asr: successes as f64 / scores.len() as f64,
        identities: per_identity.len(),
        identities_broken: broken,
        identity_success_rate: broken as f64 / per_identity.len() as f64,
        per_identity,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdEstimator {
    /// V-statistic; exactly zero for identical samples.
    #[default]
    Biased,
    /// U-statistic, diagonal terms excluded.
    Unbiased,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64c() - y.to_f64c();
            d * d
        })
        .sum()
}

/// Median of all pairwise distances within `X ∪ Y`.
pub fn median_pairwise_distance<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> f64 {
    let all: Vec<&[T]> = x.iter_rows().chain(y.iter_rows()).collect();
    let mut d: Vec<f64> = (0..all.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let all = &all;
            (i + 1..all.len()).map(move |j| sq_dist(all[i], all[j]).sqrt())
        })
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    }
}

/// `Σ_i Σ_j k(a_i, b_j)`, optionally skipping `i = j`, summed row by row in a fixed order.
fn kernel_sum<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, gamma: f64, skip_diagonal: bool) -> f64 {
    let rows: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            let mut s = 0.0;
            for (j, bj) in b.iter_rows().enumerate() {
                if !(skip_diagonal && i == j) {
                    s += (-gamma * sq_dist(ai, bj)).exp();
                }
            }
            s
        })
        .collect();
    rows.iter().sum()
}

/// Squared MMD with an RBF kernel `exp(−‖a−b‖² / 2σ²)` whose bandwidth `σ` is
/// the median pairwise distance over `X ∪ Y` (1 when that median is 0).
/// Clamped at 0.
pub fn mmd<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, estimator: MmdEstimator) -> Result<f64> {
    if x.rows() < 2 || y.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "MMD needs at least two samples per set, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(shape_err("mmd", x.shape_str(), y.shape_str()));
    }
    let mut sigma = median_pairwise_distance(x, y);
    if !(sigma > 0.0) {
        sigma = 1.0;
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let (m, n) = (x.rows() as f64, y.rows() as f64);
    let v = match estimator {
        MmdEstimator::Biased => {
            kernel_sum(x, x, gamma, false) / (m * m) + kernel_sum(y, y, gamma, false) / (n * n)
                - 2.0 * kernel_sum(x, y, gamma, false) / (m * n)
        }
        MmdEstimator::Unbiased => {
            kernel_sum(x, x, gamma, true) / (m * (m - 1.0))
                + kernel_sum(y, y, gamma, true) / (n * (n - 1.0))
                - 2.0 * kernel_sum(x, y, gamma, false) / (m * n)
        }
    };
    Ok(v.max(0.0))
}
