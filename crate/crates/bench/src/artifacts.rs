//! Output files. Every CSV starts with `# key: value` provenance lines
//! followed by a fixed header; checkpoints are wrapped in a JSON object that
//! carries the same provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hris_core::ppo::Checkpoint;
use hris_core::HrisMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::BenchError;

pub const BUILD_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ordered key/value metadata written ahead of the data.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    entries: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, method: &str) -> Self {
        Self::default()
            .with("tool", "hris-bench")
            .with("version", BUILD_VERSION)
            .with("config_hash", &cfg.hash())
            .with("profile", &cfg.profile.to_string())
            .with("seed", &cfg.seed.to_string())
            .with("method", method)
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        assert!(!key.contains(':') && !value.contains('\n'), "provenance entries are single-line");
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn to_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub episode: usize,
    pub mean_se_bpshz: f64,
    pub mean_scaled_reward: f64,
    pub clip_fraction: f64,
    pub kl_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeRow {
    pub mode: String,
    pub n_ris: usize,
    pub k_active: usize,
    pub mean_se_bpshz: f64,
    pub std_se_bpshz: f64,
    pub n_channels: usize,
}

/// An SE row tagged with the method that produced it, used where several
/// methods share one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSeRow {
    pub method: String,
    pub mode: String,
    pub n_ris: usize,
    pub k_active: usize,
    pub mean_se_bpshz: f64,
    pub std_se_bpshz: f64,
    pub n_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub method: String,
    pub n_ris: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub n_trials: usize,
}

pub const REWARD_HEADER: &[&str] = &["episode", "mean_se_bpshz", "mean_scaled_reward", "clip_fraction", "kl_estimate"];
pub const SE_HEADER: &[&str] = &["mode", "n_ris", "k_active", "mean_se_bpshz", "std_se_bpshz", "n_channels"];
pub const METHOD_SE_HEADER: &[&str] =
    &["method", "mode", "n_ris", "k_active", "mean_se_bpshz", "std_se_bpshz", "n_channels"];
pub const RUNTIME_HEADER: &[&str] = &["method", "n_ris", "median_ms", "mean_ms", "min_ms", "max_ms", "n_trials"];

pub fn reward_csv_path(dir: &Path, mode: HrisMode) -> PathBuf {
    dir.join(format!("reward_{mode}.csv"))
}

pub fn checkpoint_path(dir: &Path, mode: HrisMode) -> PathBuf {
    dir.join(format!("checkpoint_{mode}.json"))
}

/// Checkpoint used by the SE sweep for one (mode, K) pair.
pub fn sweep_checkpoint_path(dir: &Path, mode: HrisMode, k: usize) -> PathBuf {
    dir.join(format!("checkpoint_{mode}_k{k}.json"))
}

pub fn ensure_dir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

/// Serializes provenance and rows into CSV bytes. Rows are written with the
/// header derived from their field names.
pub fn csv_bytes<R: Serialize>(prov: &Provenance, rows: &[R]) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, v) in prov.entries() {
        out.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).expect("rows serialize to an in-memory buffer");
    }
    w.into_inner().expect("in-memory writer flushes")
}

pub fn write_csv<R: Serialize>(path: &Path, prov: &Provenance, rows: &[R]) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::Numeric(format!("refusing to write {} with no rows", path.display())));
    }
    fs::write(path, csv_bytes(prov, rows)).map_err(|e| BenchError::io(path, e))
}

/// A result CSV as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub provenance: Provenance,
    pub header: Vec<String>,
    pub records: Vec<csv::StringRecord>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut provenance = Provenance::default();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            match body.split_once(':') {
                Some((k, v)) => provenance = provenance.with(k.trim(), v.trim()),
                None => return Err(format!("malformed provenance line `{line}`")),
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
        let records = rdr.records().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
        Ok(Self {
            provenance,
            header,
            records,
        })
    }

    pub fn read(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BenchError::MissingArtifact(path.display().to_string()),
            _ => BenchError::io(path, e),
        })?;
        Self::parse(&text).map_err(|m| BenchError::Config(format!("malformed CSV {}: {m}", path.display())))
    }

    pub fn rows<R: DeserializeOwned>(&self) -> Result<Vec<R>, String> {
        let header = csv::StringRecord::from(self.header.clone());
        self.records.iter().map(|r| r.deserialize(Some(&header)).map_err(|e| e.to_string())).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    provenance: BTreeMap<String, String>,
    checkpoint: Checkpoint,
}

pub fn write_checkpoint(path: &Path, prov: &Provenance, ck: Checkpoint) -> Result<(), BenchError> {
    let file = CheckpointFile {
        provenance: prov.to_map(),
        checkpoint: ck,
    };
    let json = serde_json::to_string(&file).expect("checkpoint serializes");
    fs::write(path, json).map_err(|e| BenchError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => BenchError::MissingArtifact(format!(
            "checkpoint {} not found (run `hris-bench train` first)",
            path.display()
        )),
        _ => BenchError::io(path, e),
    })?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| BenchError::MissingArtifact(format!("unreadable checkpoint {}: {e}", path.display())))?;
    // re-validate the inner blob's format and version tags
    Ok(Checkpoint::from_json(&serde_json::to_string(&file.checkpoint).expect("checkpoint serializes"))?)
}
