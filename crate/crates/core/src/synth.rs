//! Synthetic stand-in for a pair of face-recognition models: two frozen random
//! encoders fed the same perturbed identity latents, plus the `EMBD`/`EMBP`
//! embedding file formats.
//!
//! ```text
//! EMBD: "EMBD" | version u16 | count u32 | dim u16 | [v2: meta_len u32 | meta]
//!       | labels u32… | embeddings f32… | checksum u64
//! EMBP: "EMBP" | same header | labels | source block | target block | checksum
//! ```
//!
//! Version 1 carries no metadata. Version 2 adds a UTF-8 text block, used to
//! record which protection scheme produced the source embeddings.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::rng;

pub const EMBD_MAGIC: &[u8; 4] = b"EMBD";
pub const EMBP_MAGIC: &[u8; 4] = b"EMBP";
/// Newest version written; files without metadata are still written as v1.
pub const EMBEDDING_FORMAT_VERSION: u16 = 2;

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_EMBEDDING_DIM: usize = 512;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;
pub const DEFAULT_SAMPLES_PER_IDENTITY: usize = 5;

/// Smallest singular value the rank proxy must exceed.
const RANK_FLOOR: f64 = 1e-3;
const RANK_PROBES: usize = 32;

/// Frozen two-layer encoder `z ↦ normalize(W₂ · tanh(W₁ · z))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub seed: u64,
    pub latent_dim: usize,
    pub out_dim: usize,
    /// `out_dim × latent_dim`.
    w1: Matrix<f64>,
    /// `out_dim × out_dim`.
    w2: Matrix<f64>,
}

fn normal(r: &mut rng::Rng) -> f64 {
    StandardNormal.sample(r)
}

fn gaussian(rows: usize, cols: usize, r: &mut rng::Rng) -> Matrix<f64> {
    let s = 1.0 / (cols as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| normal(r) * s)
}

/// Whether `g` is positive definite, via an attempted Cholesky factorization.
fn positive_definite(g: &Matrix<f64>) -> bool {
    let n = g.rows();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = g[(i, i)] - s;
                if !(d > 0.0) {
                    return false;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (g[(i, j)] - s) / l[j * n + j];
            }
        }
    }
    true
}

/// Rank proxy: `W` restricted to a few random directions must keep every
/// singular value above [`RANK_FLOOR`], i.e. `(WU)ᵀ(WU) − floor²·I ≻ 0`.
/// At most `min(rows, cols)` probes, since `WU` can have no higher rank.
fn well_conditioned(w: &Matrix<f64>, r: &mut rng::Rng) -> bool {
    let k = RANK_PROBES.min(w.cols()).min(w.rows());
    let mut u = Matrix::from_fn(w.cols(), k, |_, _| normal(r));
    // Orthonormal probe columns keep the proxy comparable to σ_min(W).
    match crate::protection::gram_schmidt_rows(&u.transpose()) {
        Ok(q) => u = q.transpose(),
        Err(_) => return false,
    }
    let wu = w.matmul(&u).expect("probe shapes agree");
    let mut g = wu.matmul_tn(&wu).expect("square Gram");
    for i in 0..k {
        g[(i, i)] -= RANK_FLOOR * RANK_FLOOR;
    }
    positive_definite(&g)
}

impl EncoderSpec {
    /// Gaussian weights scaled by `1/√fan_in`, drawn from `seed`. Draws are
    /// repeated (with a fresh stream) until both weights pass the rank proxy.
    pub fn new(seed: u64, latent_dim: usize, out_dim: usize) -> Result<Self> {
        if latent_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument(
                "encoder dimensions must be positive".into(),
            ));
        }
        for attempt in 0..16u64 {
            let mut r = rng::stream(seed, "synth.encoder", attempt);
            let w1 = gaussian(out_dim, latent_dim, &mut r);
            let w2 = gaussian(out_dim, out_dim, &mut r);
            if well_conditioned(&w1, &mut r) && well_conditioned(&w2, &mut r) {
                return Ok(Self {
                    seed,
                    latent_dim,
                    out_dim,
                    w1,
                    w2,
                });
            }
        }
        Err(Error::InvalidArgument(format!(
            "seed {seed} produced rank-deficient encoders"
        )))
    }

    pub fn encode(&self, z: &[f64]) -> Result<Vec<f32>> {
        if z.len() != self.latent_dim {
            return Err(shape_err(
                "encode",
                format!("[{}]", z.len()),
                format!("[{}]", self.latent_dim),
            ));
        }
        let h: Vec<f64> = self
            .w1
            .iter_rows()
            .map(|w| w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().tanh())
            .collect();
        let out: Vec<f64> = self
            .w2
            .iter_rows()
            .map(|w| w.iter().zip(&h).map(|(a, b)| a * b).sum())
            .collect();
        let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(out.iter().map(|x| (x / n) as f32).collect())
    }
}

/// Labelled embeddings, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    pub labels: Vec<u32>,
    pub embeddings: Matrix<f32>,
    pub meta: Option<String>,
}

/// Aligned source and target embeddings of the same inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub labels: Vec<u32>,
    /// Embeddings from the model under attack (`Γ′`).
    pub source: Matrix<f32>,
    /// Embeddings from the model the attacker can invert (`Γ`).
    pub target: Matrix<f32>,
    /// Free text describing how `source` was derived, e.g. a protection scheme.
    pub meta: Option<String>,
}

impl PairedDataset {
    pub fn new(
        labels: Vec<u32>,
        source: Matrix<f32>,
        target: Matrix<f32>,
        meta: Option<String>,
    ) -> Result<Self> {
        if source.rows() != labels.len() || target.rows() != labels.len() {
            return Err(shape_err(
                "paired dataset",
                format!("{} labels, source {}", labels.len(), source.shape_str()),
                format!("target {}", target.shape_str()),
            ));
        }
        if source.cols() != target.cols() {
            return Err(shape_err(
                "paired dataset",
                source.shape_str(),
                target.shape_str(),
            ));
        }
        Ok(Self {
            labels,
            source,
            target,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.source.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            source: self.source.select_rows(idx),
            target: self.target.select_rows(idx),
            meta: self.meta.clone(),
        }
    }

    /// Split off the last `holdout` samples of every identity, keeping the
    /// first ones for training. Identities with too few samples stay in training.
    pub fn split_holdout_samples(&self, holdout: usize) -> (Self, Self) {
        let mut seen = std::collections::HashMap::<u32, usize>::new();
        let totals = self.labels.iter().fold(
            std::collections::HashMap::<u32, usize>::new(),
            |mut m, &l| {
                *m.entry(l).or_default() += 1;
                m
            },
        );
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &l) in self.labels.iter().enumerate() {
            let k = seen.entry(l).or_default();
            let total = totals[&l];
            if total > holdout && *k >= total - holdout {
                test.push(i);
            } else {
                train.push(i);
            }
            *k += 1;
        }
        (self.select(&train), self.select(&test))
    }

    pub fn source_batch(&self) -> EmbeddingBatch {
        EmbeddingBatch {
            labels: self.labels.clone(),
            embeddings: self.source.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn target_batch(&self) -> EmbeddingBatch {
        EmbeddingBatch {
            labels: self.labels.clone(),
            embeddings: self.target.clone(),
            meta: None,
        }
    }
}

/// Generator settings for [`build_paired_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub identities: usize,
    pub samples_per_identity: usize,
    /// Absolute standard deviation of the per-sample latent perturbation.
    pub noise_sigma: f64,
    pub latent_dim: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 200,
            samples_per_identity: DEFAULT_SAMPLES_PER_IDENTITY,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            latent_dim: DEFAULT_LATENT_DIM,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        }
    }
}

/// The encoder pair derived from a seed: `(target Γ, source Γ′)`.
pub fn encoder_pair(
    seed: u64,
    latent_dim: usize,
    out_dim: usize,
) -> Result<(EncoderSpec, EncoderSpec)> {
    Ok((
        EncoderSpec::new(rng::sub_seed(seed, "synth.target", 0), latent_dim, out_dim)?,
        EncoderSpec::new(rng::sub_seed(seed, "synth.source", 0), latent_dim, out_dim)?,
    ))
}

/// Paired embeddings for `identities × samples` inputs.
///
/// Identity `i` draws a base latent `z ~ N(0, I/latent_dim)` from its own
/// sub-stream; each sample adds `N(0, σ²)` noise and is fed to both encoders.
/// Rows are ordered by identity, then sample.
pub fn build_paired_dataset(
    target_enc: &EncoderSpec,
    source_enc: &EncoderSpec,
    identities: usize,
    samples: usize,
    sigma: f64,
    seed: u64,
) -> Result<PairedDataset> {
    if target_enc.latent_dim != source_enc.latent_dim {
        return Err(shape_err(
            "build_paired_dataset latent",
            format!("[{}]", target_enc.latent_dim),
            format!("[{}]", source_enc.latent_dim),
        ));
    }
    if target_enc.out_dim != source_enc.out_dim {
        return Err(shape_err(
            "build_paired_dataset output",
            format!("[{}]", target_enc.out_dim),
            format!("[{}]", source_enc.out_dim),
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma {sigma} must be finite and nonnegative"
        )));
    }
    if identities > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many identities".into()));
    }
    let ld = target_enc.latent_dim;
    let dim = target_enc.out_dim;
    let zscale = 1.0 / (ld as f64).sqrt();
    let per_id: Vec<(Vec<f32>, Vec<f32>)> = (0..identities)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f32>, Vec<f32>)> {
            let mut r = rng::stream(seed, "synth.identity", i as u64);
            let z: Vec<f64> = (0..ld).map(|_| zscale * normal(&mut r)).collect();
            let (mut src, mut tgt) = (
                Vec::with_capacity(samples * dim),
                Vec::with_capacity(samples * dim),
            );
            for _ in 0..samples {
                let zs: Vec<f64> = z.iter().map(|&v| v + sigma * normal(&mut r)).collect();
                tgt.extend(target_enc.encode(&zs)?);
                src.extend(source_enc.encode(&zs)?);
            }
            Ok((src, tgt))
        })
        .collect::<Result<_>>()?;
    let n = identities * samples;
    let (mut src, mut tgt) = (Vec::with_capacity(n * dim), Vec::with_capacity(n * dim));
    for (s, t) in per_id {
        src.extend(s);
        tgt.extend(t);
    }
    let labels = (0..identities as u32)
        .flat_map(|i| std::iter::repeat_n(i, samples))
        .collect();
    PairedDataset::new(
        labels,
        Matrix::from_vec(n, dim, src)?,
        Matrix::from_vec(n, dim, tgt)?,
        None,
    )
}

/// Encoders and dataset from a single config.
pub fn synthesize(cfg: &SynthConfig) -> Result<PairedDataset> {
    let (t, s) = encoder_pair(cfg.seed, cfg.latent_dim, cfg.embedding_dim)?;
    build_paired_dataset(
        &t,
        &s,
        cfg.identities,
        cfg.samples_per_identity,
        cfg.noise_sigma,
        rng::sub_seed(cfg.seed, "synth.data", 0),
    )
}

fn write_header(
    w: &mut ByteWriter,
    magic: &[u8; 4],
    count: usize,
    dim: usize,
    meta: Option<&str>,
) -> Result<()> {
    let count = u32::try_from(count)
        .map_err(|_| Error::InvalidArgument(format!("{count} rows exceed u32")))?;
    let dim = u16::try_from(dim)
        .map_err(|_| Error::InvalidArgument(format!("dimension {dim} exceeds u16")))?;
    w.bytes(magic);
    w.u16(if meta.is_some() { 2 } else { 1 });
    w.u32(count);
    w.u16(dim);
    if let Some(m) = meta {
        let len = u32::try_from(m.len())
            .map_err(|_| Error::InvalidArgument("metadata too long".into()))?;
        w.u32(len);
        w.bytes(m.as_bytes());
    }
    Ok(())
}

struct Header {
    count: usize,
    dim: usize,
    meta: Option<String>,
}

fn read_header(r: &mut ByteReader<'_>, magic: &[u8; 4], format: &'static str) -> Result<Header> {
    r.magic(magic)?;
    let version = r.u16()?;
    if !(1..=EMBEDDING_FORMAT_VERSION).contains(&version) {
        return Err(Error::Version {
            format,
            found: version,
            supported: format!("1..={EMBEDDING_FORMAT_VERSION}"),
        });
    }
    let count = r.u32()? as usize;
    let dim = r.u16()? as usize;
    let meta = if version >= 2 {
        let len = r.u32()? as usize;
        let raw = r.bytes(len)?;
        Some(String::from_utf8(raw.to_vec()).map_err(|_| r.malformed("metadata is not UTF-8"))?)
    } else {
        None
    };
    Ok(Header { count, dim, meta })
}

fn read_labels(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<u32>> {
    (0..n).map(|_| r.u32()).collect()
}

fn block_bytes(h: &Header, blocks: usize) -> Option<usize> {
    let floats = h.count.checked_mul(h.dim)?.checked_mul(blocks)?;
    h.count.checked_add(floats)?.checked_mul(4)
}

pub fn batch_to_bytes(b: &EmbeddingBatch) -> Result<Vec<u8>> {
    if b.labels.len() != b.embeddings.rows() {
        return Err(shape_err(
            "EMBD",
            format!("{} labels", b.labels.len()),
            b.embeddings.shape_str(),
        ));
    }
    let mut w =
        ByteWriter::with_capacity(16 + b.embeddings.as_slice().len() * 4 + b.labels.len() * 4);
    write_header(
        &mut w,
        EMBD_MAGIC,
        b.labels.len(),
        b.embeddings.cols(),
        b.meta.as_deref(),
    )?;
    b.labels.iter().for_each(|&l| w.u32(l));
    w.f32s(b.embeddings.as_slice().iter().copied());
    Ok(w.finish())
}

pub fn batch_from_bytes(bytes: &[u8]) -> Result<EmbeddingBatch> {
    let mut r = ByteReader::new("EMBD", bytes);
    let h = read_header(&mut r, EMBD_MAGIC, "EMBD")?;
    let body = block_bytes(&h, 1).ok_or_else(|| r.malformed("size overflow"))?;
    r.expect_remaining_and_verify(body)?;
    let labels = read_labels(&mut r, h.count)?;
    let embeddings = Matrix::from_vec(h.count, h.dim, r.f32s(h.count * h.dim)?)?;
    Ok(EmbeddingBatch {
        labels,
        embeddings,
        meta: h.meta,
    })
}

pub fn dataset_to_bytes(d: &PairedDataset) -> Result<Vec<u8>> {
    let mut w = ByteWriter::with_capacity(16 + d.source.as_slice().len() * 8 + d.labels.len() * 4);
    write_header(&mut w, EMBP_MAGIC, d.len(), d.dim(), d.meta.as_deref())?;
    d.labels.iter().for_each(|&l| w.u32(l));
    w.f32s(d.source.as_slice().iter().copied());
    w.f32s(d.target.as_slice().iter().copied());
    Ok(w.finish())
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<PairedDataset> {
    let mut r = ByteReader::new("EMBP", bytes);
    let h = read_header(&mut r, EMBP_MAGIC, "EMBP")?;
    let body = block_bytes(&h, 2).ok_or_else(|| r.malformed("size overflow"))?;
    r.expect_remaining_and_verify(body)?;
    let labels = read_labels(&mut r, h.count)?;
    let source = Matrix::from_vec(h.count, h.dim, r.f32s(h.count * h.dim)?)?;
    let target = Matrix::from_vec(h.count, h.dim, r.f32s(h.count * h.dim)?)?;
    PairedDataset::new(labels, source, target, h.meta)
}

pub fn save_dataset(d: &PairedDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(d)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<PairedDataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}

pub fn save_batch(b: &EmbeddingBatch, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, batch_to_bytes(b)?)?;
    Ok(())
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<EmbeddingBatch> {
    batch_from_bytes(&std::fs::read(path)?)
}
