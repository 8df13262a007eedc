//! Command-line options and the config file they merge with.
//!
//! Every tunable is optional on the command line and may also be set in the
//! matching `[section]` of the `--config` TOML file. Flags win over the file;
//! the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Declares an options struct usable both as clap flags and as a config
/// section, plus a `merged` method giving flags precedence.
macro_rules! options {
    ($(#[$m:meta])* $name:ident { $( $(#[$fm:meta])* $field:ident : $ty:ty ),* $(,)? }) => {
        $(#[$m])*
        #[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
        #[serde(deny_unknown_fields, rename_all = "kebab-case")]
        pub struct $name {
            $( $(#[$fm])* #[arg(long)] pub $field: Option<$ty>, )*
        }

        impl $name {
            pub fn merged(self, file: Self) -> Self {
                Self { $( $field: self.$field.or(file.$field), )* }
            }
        }
    };
}

options!(SynthOpts {
    /// Number of identities.
    ids: usize,
    /// Samples per identity.
    samples: usize,
    /// Standard deviation of the per-sample latent noise.
    sigma: f64,
    latent_dim: usize,
    /// Embedding dimension.
    dim: usize,
    /// Move the last N samples of every identity into the --test-out file.
    holdout_samples: usize,
    test_out: PathBuf,
});

options!(TrainOpts {
    /// Paired dataset (EMBP) to learn source → target from.
    data: PathBuf,
    /// Network variant: kan or mlp.
    model: String,
    epochs: usize,
    batch_size: usize,
    /// sgd or adamw; defaults to sgd for kan and adamw for mlp.
    optimizer: String,
    lr: f64,
    /// Multiplicative learning-rate decay per epoch.
    lr_decay: f64,
    weight_decay: f64,
    /// Loss preset: full, pd or pd+ced.
    loss: String,
    /// Comma-separated width sequence, input and output included.
    widths: String,
    grid_size: usize,
    spline_order: usize,
    grid_lo: f64,
    grid_hi: f64,
    shuffle: bool,
    /// Per-epoch loss CSV; defaults to the model path with a .history.csv extension.
    history: PathBuf,
});

options!(MapOpts {
    /// Paired dataset whose source embeddings are mapped.
    data: PathBuf,
    /// Trained model (FEMW).
    model: PathBuf,
    /// Report written by `train` for this model, checked for protection-scheme mismatches.
    train_report: PathBuf,
});

options!(ProtectOpts {
    data: PathBuf,
    /// polyprotect or mlphash.
    scheme: String,
    /// PolyProtect window size m.
    window: usize,
    /// PolyProtect overlap between consecutive windows.
    overlap: usize,
    /// MLP-Hash seed shared by all identities; defaults to --seed.
    hash_seed: u64,
    /// Comma-separated MLP-Hash layer widths.
    hash_widths: String,
    /// MLP-Hash binarization threshold.
    tau: f64,
});

options!(LeakOpts {
    data: PathBuf,
    /// Leaked share of each source embedding, in (0, 1].
    fraction: f64,
    /// half-up or floor.
    rounding: String,
});

options!(EvalOpts {
    /// Paired dataset: source rows are probes, target rows the enrolled templates.
    data: PathBuf,
    /// False acceptance rate the threshold is calibrated for.
    far: f64,
    /// Impostor pairs sampled for calibration.
    impostor_pairs: usize,
    /// MMD estimator: biased, unbiased or none.
    mmd: String,
});

/// Flags every subcommand accepts.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Root seed; every random stream derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML config file with a top-level `seed` and per-command sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Primary output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Structured report (TOML) describing the run.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(name = "femap", version, about = "Face-embedding mapping experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic paired-embedding dataset (EMBP).
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: SynthOpts,
    },
    /// Train a mapping network on a paired dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Replace source embeddings by their mapping through a trained model.
    Map {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: MapOpts,
    },
    /// Protect source embeddings with PolyProtect or MLP-Hash.
    Protect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: ProtectOpts,
    },
    /// Keep only a prefix of each source embedding and zero the rest.
    Leak {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: LeakOpts,
    },
    /// Similarity, FAR-calibrated ASR and MMD of source against target embeddings.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: EvalOpts,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    #[serde(default)]
    pub synth: SynthOpts,
    #[serde(default)]
    pub train: TrainOpts,
    #[serde(default)]
    pub map: MapOpts,
    #[serde(default)]
    pub protect: ProtectOpts,
    #[serde(default)]
    pub leak: LeakOpts,
    #[serde(default)]
    pub eval: EvalOpts,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Parse a comma-separated list of positive integers.
pub fn parse_widths(s: &str) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| UsageError(format!("invalid width {p:?} in {s:?}")).into())
        })
        .collect()
}

/// Unwrap a required option or fail with a usage error naming the flag.
pub fn required<T>(v: Option<T>, flag: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| UsageError(format!("missing required --{flag}")).into())
}

/// Seeds are recorded as TOML integers, which are signed 64-bit.
pub fn check_seed(seed: u64, flag: &str) -> anyhow::Result<u64> {
    if seed > i64::MAX as u64 {
        return Err(UsageError(format!("--{flag} {seed} exceeds {}", i64::MAX)).into());
    }
    Ok(seed)
}
