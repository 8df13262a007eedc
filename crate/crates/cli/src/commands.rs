use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use femap::eval::{self, MetricsReport, MmdEstimator};
use femap::fem::{self, FemConfig, FemModel, LossWeights, TrainConfig, Variant};
use femap::kan::SplineGrid;
use femap::leakage::{self, LeakageSpec, Rounding};
use femap::nn::{Matrix, OptimizerConfig, OptimizerKind};
use femap::protection::{self, MlpHash, MlpHashParams, PolyProtectParams};
use femap::rng;
use femap::synth::{self, PairedDataset, SynthConfig};
use serde::Serialize;

use crate::opts::{
    parse_widths, required, Common, EvalOpts, LeakOpts, MapOpts, ProtectOpts, SynthOpts, TrainOpts,
};
use crate::report::{
    self, load_dataset, meta_table, protection_scheme, save_dataset, set_meta, to_value, Report,
};
use crate::UsageError;

/// Impostor pairs drawn for the separability summary printed by `synth`.
const SUMMARY_IMPOSTOR_PAIRS: usize = 10_000;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Serialize)]
struct SynthResolved {
    #[serde(flatten)]
    synth: SynthConfig,
    holdout_samples: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_out: Option<String>,
}

#[derive(Serialize)]
struct SynthSummary {
    pairs: usize,
    identities: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    held_out_pairs: Option<usize>,
    /// Mean cosine between a sample's source and target embeddings.
    cross_domain_mean_cosine: f64,
    target_genuine_mean: f64,
    target_impostor_mean: f64,
    source_genuine_mean: f64,
    source_impostor_mean: f64,
}

pub fn synth(common: &Common, seed: u64, o: SynthOpts) -> anyhow::Result<()> {
    let out = required(common.out.clone(), "out")?;
    let cfg = SynthConfig {
        identities: o.ids.unwrap_or(200),
        samples_per_identity: o.samples.unwrap_or(synth::DEFAULT_SAMPLES_PER_IDENTITY),
        noise_sigma: o.sigma.unwrap_or(synth::DEFAULT_NOISE_SIGMA),
        latent_dim: o.latent_dim.unwrap_or(synth::DEFAULT_LATENT_DIM),
        embedding_dim: o.dim.unwrap_or(synth::DEFAULT_EMBEDDING_DIM),
        seed,
    };
    if cfg.identities < 2 || cfg.samples_per_identity == 0 {
        return Err(usage("synth needs at least 2 identities and 1 sample each"));
    }
    let holdout = o.holdout_samples.unwrap_or(0);
    if holdout > 0 && o.test_out.is_none() {
        return Err(usage("--holdout-samples needs --test-out"));
    }
    if holdout >= cfg.samples_per_identity && holdout > 0 {
        return Err(usage(
            "--holdout-samples must leave at least one training sample per identity",
        ));
    }
    let d = synth::synthesize(&cfg)?;

    let impostor =
        |m: &Matrix<f32>| eval::sample_impostor_scores(m, &d.labels, SUMMARY_IMPOSTOR_PAIRS, seed);
    let summary = SynthSummary {
        pairs: d.len(),
        identities: cfg.identities,
        held_out_pairs: (holdout > 0).then_some(holdout * cfg.identities),
        cross_domain_mean_cosine: mean(&eval::paired_cosines(&d.source, &d.target)?),
        target_genuine_mean: mean(&eval::genuine_pair_scores(&d.target, &d.labels)?),
        target_impostor_mean: mean(&impostor(&d.target)?),
        source_genuine_mean: mean(&eval::genuine_pair_scores(&d.source, &d.labels)?),
        source_impostor_mean: mean(&impostor(&d.source)?),
    };

    if holdout > 0 {
        let (train, test) = d.split_holdout_samples(holdout);
        save_dataset(&train, &out)?;
        save_dataset(&test, o.test_out.as_ref().expect("checked above"))?;
    } else {
        save_dataset(&d, &out)?;
    }
    println!(
        "synth: {} pairs ({} identities × {}); genuine/impostor cosine target {:.3}/{:.3}, source {:.3}/{:.3}; cross-domain {:.3}",
        summary.pairs,
        cfg.identities,
        cfg.samples_per_identity,
        summary.target_genuine_mean,
        summary.target_impostor_mean,
        summary.source_genuine_mean,
        summary.source_impostor_mean,
        summary.cross_domain_mean_cosine
    );
    Report {
        command: "synth",
        seed,
        formats: Default::default(),
        warnings: vec![],
        config: SynthResolved {
            synth: cfg,
            holdout_samples: holdout,
            out: display(&out),
            test_out: o.test_out.as_deref().map(display),
        },
        results: summary,
    }
    .write(common.report.as_deref())
}

#[derive(Serialize)]
struct TrainResolved {
    data: String,
    out: String,
    history: String,
    model: Variant,
    /// Protection scheme recorded in the training data, `none` if unprotected.
    data_protection: String,
    loss: String,
    architecture: FemConfig,
    train: TrainConfig,
    /// Derived from the root seed; hex because TOML integers are signed.
    init_seed: String,
}

#[derive(Serialize)]
struct TrainResults {
    pairs: usize,
    parameters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<fem::LossBreakdown>,
    history: Vec<fem::EpochRecord>,
}

fn history_path(out: &Path) -> PathBuf {
    out.with_extension("history.csv")
}

fn write_history(path: &Path, history: &[fem::EpochRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "lr", "mse", "pd", "ced", "total"])?;
    for h in history {
        w.write_record(&[
            h.epoch.to_string(),
            h.lr.to_string(),
            h.loss.mse.to_string(),
            h.loss.pd.to_string(),
            h.loss.ced.to_string(),
            h.loss.total.to_string(),
        ])?;
    }
    report::write_file(path, &w.into_inner().context("flushing history CSV")?)
}

fn optimizer_config(variant: Variant, o: &TrainOpts) -> anyhow::Result<OptimizerConfig> {
    let default = TrainConfig::for_variant(variant).optimizer;
    let mut cfg = match o.optimizer.as_deref() {
        None => default,
        Some("sgd") if default.kind == OptimizerKind::Sgd => default,
        Some("adamw") if default.kind == OptimizerKind::AdamW => default,
        Some("sgd") => OptimizerConfig::sgd(default.lr),
        Some("adamw") => OptimizerConfig::adamw(default.lr),
        Some(other) => return Err(usage(format!("unknown optimizer {other:?} (sgd|adamw)"))),
    };
    if let Some(lr) = o.lr {
        cfg.lr = lr;
    }
    if let Some(g) = o.lr_decay {
        cfg.lr_decay_gamma = g;
    }
    if let Some(wd) = o.weight_decay {
        cfg.weight_decay = wd;
    }
    Ok(cfg)
}

pub fn train(common: &Common, seed: u64, o: TrainOpts) -> anyhow::Result<()> {
    let data = required(o.data.clone(), "data")?;
    let out = required(common.out.clone(), "out")?;
    let variant: Variant = o
        .model
        .as_deref()
        .unwrap_or("kan")
        .parse()
        .map_err(|e: femap::Error| usage(e.to_string()))?;
    let loss_name = o.loss.clone().unwrap_or_else(|| "full".into());
    let lambdas = LossWeights::preset(&loss_name).ok_or_else(|| {
        usage(format!(
            "unknown loss preset {loss_name:?} (full|pd|pd+ced)"
        ))
    })?;
    let mut tc = TrainConfig::for_variant(variant);
    tc.seed = seed;
    tc.lambdas = lambdas;
    tc.optimizer = optimizer_config(variant, &o)?;
    if let Some(e) = o.epochs {
        tc.epochs = e;
    }
    if let Some(b) = o.batch_size {
        tc.batch_size = b;
    }
    if let Some(s) = o.shuffle {
        tc.shuffle = s;
    }
    tc.validate().map_err(|e| usage(e.to_string()))?;

    let d = load_dataset(&data)?;
    let widths = match &o.widths {
        Some(w) => parse_widths(w)?,
        None => {
            let mut w = fem::DEFAULT_WIDTHS.to_vec();
            let last = w.len() - 1;
            (w[0], w[last]) = (d.dim(), d.dim());
            w
        }
    };
    let defaults = SplineGrid::default();
    let arch = FemConfig {
        widths,
        grid: SplineGrid {
            grid_size: o.grid_size.unwrap_or(defaults.grid_size),
            order: o.spline_order.unwrap_or(defaults.order),
            lo: o.grid_lo.unwrap_or(defaults.lo),
            hi: o.grid_hi.unwrap_or(defaults.hi),
        },
    };
    arch.validate().map_err(|e| usage(e.to_string()))?;
    if arch.widths[0] != d.dim() {
        return Err(usage(format!(
            "widths {:?} do not match the {}-dimensional embeddings in {}",
            arch.widths,
            d.dim(),
            data.display()
        )));
    }
    if d.is_empty() && tc.epochs > 0 {
        return Err(usage(format!("{} holds no training pairs", data.display())));
    }

    let init_seed = rng::sub_seed(seed, "train.init", 0);
    let mut model = FemModel::<f32>::build(variant, &arch, init_seed)?;
    let started = Instant::now();
    let history = fem::train_with(&mut model, &d.source, &d.target, &tc, |r| {
        eprintln!(
            "epoch {:>3}  lr {:.3e}  loss {:.5} (mse {:.5}, pd {:.5}, ced {:.5})  {:.1?}",
            r.epoch + 1,
            r.lr,
            r.loss.total,
            r.loss.mse,
            r.loss.pd,
            r.loss.ced,
            started.elapsed()
        );
    })?;

    fem::save_model(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    let history_file = o.history.clone().unwrap_or_else(|| history_path(&out));
    write_history(&history_file, &history)?;
    let data_protection = protection_scheme(&meta_table(&d)?);
    println!(
        "train: {} model, {} epochs on {} pairs{}",
        variant.name(),
        history.len(),
        d.len(),
        history
            .last()
            .map(|h| format!(", final loss {:.5}", h.loss.total))
            .unwrap_or_default()
    );
    let parameters = {
        use femap::nn::Trainable;
        model.param_count()
    };
    Report {
        command: "train",
        seed,
        formats: Default::default(),
        warnings: vec![],
        config: TrainResolved {
            data: display(&data),
            out: display(&out),
            history: display(&history_file),
            model: variant,
            data_protection,
            loss: loss_name,
            architecture: arch,
            train: tc,
            init_seed: format!("{init_seed:#018x}"),
        },
        results: TrainResults {
            pairs: d.len(),
            parameters,
            final_loss: history.last().map(|h| h.loss),
            history,
        },
    }
    .write(common.report.as_deref())
}

#[derive(Serialize)]
struct MapResolved {
    data: String,
    model: String,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_report: Option<String>,
}

#[derive(Serialize)]
struct MapResults {
    pairs: usize,
    variant: Variant,
    model_checksum: String,
    data_protection: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_protection: Option<String>,
}

/// Protection scheme of the data a model was trained on, read from its train report.
fn trained_protection(path: &Path) -> anyhow::Result<String> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| usage(format!("train report {}: {e}", path.display())))?;
    table
        .get("config")
        .and_then(|c| c.get("data_protection"))
        .and_then(|s| s.as_str())
        .map(str::to_string)
        .ok_or_else(|| usage(format!("{} is not a train report", path.display())))
}

pub fn map(common: &Common, seed: u64, o: MapOpts) -> anyhow::Result<()> {
    let data = required(o.data.clone(), "data")?;
    let model_path = required(o.model.clone(), "model")?;
    let out = required(common.out.clone(), "out")?;
    let model_bytes = report::read_file(&model_path)?;
    let model = fem::model_from_bytes(&model_bytes)
        .with_context(|| format!("parsing {}", model_path.display()))?;
    let mut d = load_dataset(&data)?;
    let mut meta = meta_table(&d)?;
    let data_protection = protection_scheme(&meta);

    let mut warnings = Vec::new();
    let model_protection = o
        .train_report
        .as_deref()
        .map(trained_protection)
        .transpose()?;
    if let Some(trained) = &model_protection {
        if *trained != data_protection {
            let w = format!(
                "model was trained on {trained:?}-protected embeddings but {} holds {data_protection:?} embeddings",
                data.display()
            );
            eprintln!("warning: {w}");
            warnings.push(w);
        }
    }

    let mapped = model.map_embedding(&d.source)?;
    d.source = mapped;
    let checksum = format!("{:016x}", femap::codec::checksum(&model_bytes));
    let mut mapping = toml::Table::new();
    mapping.insert("variant".into(), model.variant().name().into());
    mapping.insert("model_checksum".into(), checksum.clone().into());
    meta.insert("mapping".into(), mapping.into());
    set_meta(&mut d, &meta)?;
    save_dataset(&d, &out)?;
    println!(
        "map: {} embeddings through the {} model",
        d.len(),
        model.variant().name()
    );
    Report {
        command: "map",
        seed,
        formats: Default::default(),
        warnings,
        config: MapResolved {
            data: display(&data),
            model: display(&model_path),
            out: display(&out),
            train_report: o.train_report.as_deref().map(display),
        },
        results: MapResults {
            pairs: d.len(),
            variant: model.variant(),
            model_checksum: checksum,
            data_protection,
            model_protection,
        },
    }
    .write(common.report.as_deref())
}

#[derive(Serialize)]
struct ProtectResolved {
    data: String,
    out: String,
    scheme: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mlphash: Option<MlpHashParams>,
}

#[derive(Serialize)]
struct ProtectResults {
    pairs: usize,
    input_dim: usize,
    protected_dim: usize,
    padded_to: usize,
}

#[derive(Serialize)]
struct IdentityParams<'a> {
    label: u32,
    #[serde(flatten)]
    params: &'a PolyProtectParams,
}

pub fn protect(common: &Common, seed: u64, o: ProtectOpts) -> anyhow::Result<()> {
    let data = required(o.data.clone(), "data")?;
    let out = required(common.out.clone(), "out")?;
    let scheme = required(o.scheme.clone(), "scheme")?;
    let mut d = load_dataset(&data)?;
    let mut meta = meta_table(&d)?;
    if meta.contains_key("protection") {
        return Err(usage(format!(
            "{} is already protected ({})",
            data.display(),
            protection_scheme(&meta)
        )));
    }
    let dim = d.dim();
    let n = d.len();
    let mut record = toml::Table::new();
    record.insert("scheme".into(), scheme.clone().into());
    let (protected_dim, rows, resolved) = match scheme.as_str() {
        "polyprotect" => {
            let (m, overlap) = (o.window.unwrap_or(5), o.overlap.unwrap_or(4));
            let mut per_id: BTreeMap<u32, PolyProtectParams> = BTreeMap::new();
            for &l in &d.labels {
                if let std::collections::btree_map::Entry::Vacant(e) = per_id.entry(l) {
                    let s = rng::sub_seed(seed, "protect", l as u64);
                    e.insert(
                        protection::polyprotect_gen_with(s, m, overlap)
                            .map_err(|e| usage(e.to_string()))?,
                    );
                }
            }
            let mut rows = Vec::with_capacity(n);
            for (v, l) in d.source.iter_rows().zip(&d.labels) {
                rows.push(protection::polyprotect(v, &per_id[l])?);
            }
            let out_len = match per_id.values().next() {
                Some(p) => p.output_len(dim)?,
                None => dim,
            };
            record.insert("window".into(), (m as i64).into());
            record.insert("overlap".into(), (overlap as i64).into());
            let ids: Vec<IdentityParams> = per_id
                .iter()
                .map(|(&label, params)| IdentityParams { label, params })
                .collect();
            record.insert("identities".into(), to_value(&ids)?);
            (
                out_len,
                rows,
                ProtectResolved {
                    data: display(&data),
                    out: display(&out),
                    scheme: scheme.clone(),
                    window: Some(m),
                    overlap: Some(overlap),
                    mlphash: None,
                },
            )
        }
        "mlphash" => {
            let hash_seed = o.hash_seed.unwrap_or(seed);
            crate::opts::check_seed(hash_seed, "hash-seed")?;
            let params = MlpHashParams {
                seed: hash_seed,
                layer_widths: match &o.hash_widths {
                    Some(w) => parse_widths(w)?,
                    None => vec![dim],
                },
                tau: o.tau.unwrap_or(0.0),
            };
            let hash = MlpHash::new(params.clone(), dim).map_err(|e| usage(e.to_string()))?;
            let rows = d
                .source
                .iter_rows()
                .map(|v| hash.hash(v))
                .collect::<femap::Result<Vec<_>>>()?;
            record.insert("params".into(), to_value(&params)?);
            (
                hash.output_dim(),
                rows,
                ProtectResolved {
                    data: display(&data),
                    out: display(&out),
                    scheme: scheme.clone(),
                    window: None,
                    overlap: None,
                    mlphash: Some(params),
                },
            )
        }
        other => {
            return Err(usage(format!(
                "unknown scheme {other:?} (polyprotect|mlphash)"
            )))
        }
    };
    if protected_dim > dim {
        return Err(usage(format!(
            "protected length {protected_dim} exceeds the embedding dimension {dim}"
        )));
    }
    let mut flat = Vec::with_capacity(n * dim);
    for r in rows {
        flat.extend(protection::pad_to_dim(&r, dim)?);
    }
    d.source = Matrix::from_vec(n, dim, flat)?;
    record.insert("protected_dim".into(), (protected_dim as i64).into());
    record.insert("padded_to".into(), (dim as i64).into());
    meta.insert("protection".into(), record.into());
    set_meta(&mut d, &meta)?;
    save_dataset(&d, &out)?;
    if protected_dim < dim {
        println!(
            "protect: {scheme} maps {dim} values to {protected_dim}; appended {} zeros to keep {dim}",
            dim - protected_dim
        );
    } else {
        println!("protect: {scheme} applied to {n} embeddings");
    }
    Report {
        command: "protect",
        seed,
        formats: Default::default(),
        warnings: vec![],
        config: resolved,
        results: ProtectResults {
            pairs: n,
            input_dim: dim,
            protected_dim,
            padded_to: dim,
        },
    }
    .write(common.report.as_deref())
}

#[derive(Serialize)]
struct LeakResolved {
    data: String,
    out: String,
    spec: LeakageSpec,
}

#[derive(Serialize)]
struct LeakResults {
    pairs: usize,
    kept: usize,
    zeroed: usize,
}

pub fn leak(common: &Common, seed: u64, o: LeakOpts) -> anyhow::Result<()> {
    let data = required(o.data.clone(), "data")?;
    let out = required(common.out.clone(), "out")?;
    let fraction = required(o.fraction, "fraction")?;
    let rounding = match o.rounding.as_deref().unwrap_or("half-up") {
        "half-up" => Rounding::HalfUp,
        "floor" => Rounding::Floor,
        other => return Err(usage(format!("unknown rounding {other:?} (half-up|floor)"))),
    };
    let mut d = load_dataset(&data)?;
    let spec = LeakageSpec {
        fraction,
        total_dim: d.dim(),
        rounding,
    };
    let kept = spec.kept().map_err(|e| usage(e.to_string()))?;
    let mut flat = Vec::with_capacity(d.source.as_slice().len());
    for v in d.source.iter_rows() {
        flat.extend(leakage::leak(v, &spec)?);
    }
    d.source = Matrix::from_vec(d.len(), d.dim(), flat)?;
    let mut meta = meta_table(&d)?;
    meta.insert("leakage".into(), to_value(&spec)?);
    set_meta(&mut d, &meta)?;
    save_dataset(&d, &out)?;
    println!(
        "leak: kept the first {kept} of {} values in {} embeddings",
        d.dim(),
        d.len()
    );
    Report {
        command: "leak",
        seed,
        formats: Default::default(),
        warnings: vec![],
        config: LeakResolved {
            data: display(&data),
            out: display(&out),
            spec,
        },
        results: LeakResults {
            pairs: d.len(),
            kept,
            zeroed: d.dim() - kept,
        },
    }
    .write(common.report.as_deref())
}

#[derive(Serialize)]
struct EvalResolved {
    data: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
    far: f64,
    impostor_pairs: usize,
    mmd: String,
}

fn write_scores(path: &Path, d: &PairedDataset, m: &MetricsReport) -> anyhow::Result<()> {
    let threshold = m.threshold.as_ref().map(|t| t.value);
    let mut buf = format!("# femap scores v{}\n", report::SCORES_VERSION).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["index", "label", "cosine", "accepted"])?;
        for (i, (&l, &s)) in d.labels.iter().zip(&m.scores).enumerate() {
            let accepted = threshold.map(|t| (s >= t).to_string()).unwrap_or_default();
            w.write_record(&[i.to_string(), l.to_string(), s.to_string(), accepted])?;
        }
        w.flush().context("flushing scores CSV")?;
    }
    report::write_file(path, &buf)
}

pub fn eval(common: &Common, seed: u64, o: EvalOpts) -> anyhow::Result<()> {
    let data = required(o.data.clone(), "data")?;
    let far = o.far.unwrap_or(eval::DEFAULT_FAR);
    let pairs = o.impostor_pairs.unwrap_or(eval::DEFAULT_IMPOSTOR_PAIRS);
    let mmd_name = o.mmd.clone().unwrap_or_else(|| "biased".into());
    let estimator = match mmd_name.as_str() {
        "biased" => Some(MmdEstimator::Biased),
        "unbiased" => Some(MmdEstimator::Unbiased),
        "none" => None,
        other => {
            return Err(usage(format!(
                "unknown MMD estimator {other:?} (biased|unbiased|none)"
            )))
        }
    };
    if pairs == 0 {
        return Err(usage("--impostor-pairs must be positive"));
    }
    let d = load_dataset(&data)?;
    let impostors = eval::sample_impostor_scores(&d.target, &d.labels, pairs, seed)
        .map_err(|e| usage(e.to_string()))?;
    let threshold = eval::calibrate_threshold(&impostors, far).map_err(|e| usage(e.to_string()))?;
    let mut m = eval::asr(&d.source, &d.target, &d.labels, &threshold)?;
    if let Some(est) = estimator {
        m.mmd = Some(eval::mmd(&d.source, &d.target, est)?);
    }
    if let Some(out) = &common.out {
        write_scores(out, &d, &m)?;
    }
    let a = m.asr.as_ref().expect("asr populated");
    println!(
        "eval: mean cosine {:.4} (median {:.4}); ASR {:.4} ({} / {}) at threshold {:.4} for FAR {}{}",
        m.similarity.mean,
        m.similarity.median,
        a.asr,
        a.successes,
        a.attempts,
        threshold.value,
        far,
        m.mmd.map(|v| format!("; MMD² {v:.6}")).unwrap_or_default()
    );
    Report {
        command: "eval",
        seed,
        formats: Default::default(),
        warnings: vec![],
        config: EvalResolved {
            data: display(&data),
            out: common.out.as_deref().map(display),
            far,
            impostor_pairs: pairs,
            mmd: mmd_name,
        },
        results: m,
    }
    .write(common.report.as_deref())
}
