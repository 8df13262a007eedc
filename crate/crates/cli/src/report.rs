//! Run reports, file helpers and dataset metadata.

use std::path::Path;

use anyhow::Context;
use femap::fem::format::FEMW_VERSION;
use femap::synth::{self, PairedDataset, EMBEDDING_FORMAT_VERSION};
use serde::Serialize;

/// Version of the report layout written by this tool.
pub const REPORT_VERSION: u32 = 1;
/// Version of the per-probe score CSV.
pub const SCORES_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Formats {
    pub report: u32,
    pub scores_csv: u32,
    pub embp: u16,
    pub femw: u16,
}

impl Default for Formats {
    fn default() -> Self {
        Self {
            report: REPORT_VERSION,
            scores_csv: SCORES_VERSION,
            embp: EMBEDDING_FORMAT_VERSION,
            femw: FEMW_VERSION,
        }
    }
}

/// Everything a run writes to `--report`: the resolved configuration, format
/// versions, results and warnings. No timestamps, so identical runs produce
/// identical bytes.
#[derive(Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub formats: Formats,
    pub warnings: Vec<String>,
    pub config: C,
    pub results: R,
}

impl<C: Serialize, R: Serialize> Report<'_, C, R> {
    pub fn write(&self, path: Option<&Path>) -> anyhow::Result<()> {
        if let Some(path) = path {
            let text = toml::to_string(self).context("serializing report")?;
            write_file(path, text.as_bytes())?;
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_dataset(path: &Path) -> anyhow::Result<PairedDataset> {
    let bytes = read_file(path)?;
    synth::dataset_from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn save_dataset(d: &PairedDataset, path: &Path) -> anyhow::Result<()> {
    write_file(path, &synth::dataset_to_bytes(d)?)
}

/// Dataset metadata as a TOML table (empty when the file carries none).
pub fn meta_table(d: &PairedDataset) -> anyhow::Result<toml::Table> {
    match &d.meta {
        None => Ok(toml::Table::new()),
        Some(text) => toml::from_str(text).context("dataset metadata is not a TOML table"),
    }
}

pub fn set_meta(d: &mut PairedDataset, table: &toml::Table) -> anyhow::Result<()> {
    d.meta = if table.is_empty() {
        None
    } else {
        Some(toml::to_string(table).context("serializing dataset metadata")?)
    };
    Ok(())
}

/// Name of the protection scheme applied to a dataset's source embeddings.
pub fn protection_scheme(table: &toml::Table) -> String {
    table
        .get("protection")
        .and_then(|p| p.get("scheme"))
        .and_then(|s| s.as_str())
        .unwrap_or("none")
        .to_string()
}

pub fn to_value<T: Serialize>(v: &T) -> anyhow::Result<toml::Value> {
    toml::Value::try_from(v).context("encoding metadata")
}
