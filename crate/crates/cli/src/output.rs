//! Report bundles, atomic writes and the run manifest.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A failed check, dumped to stderr and recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub check: String,
    pub rate: String,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub value: f64,
    pub limit: f64,
    pub witness: serde_json::Value,
}

#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<(String, Vec<u8>)>,
    pub violations: Vec<Violation>,
    pub summary: Vec<String>,
}

impl Report {
    pub fn add_file(&mut self, name: &str, body: Vec<u8>) {
        self.files.push((name.to_string(), body));
    }

    pub fn merge(&mut self, other: Report) {
        self.files.extend(other.files);
        self.violations.extend(other.violations);
        self.summary.extend(other.summary);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a temporary file in `dir` and renames it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    experiment: String,
    config: &'a ExperimentConfig,
    config_sha256: String,
    seeds: &'a [u64],
    threads: usize,
    started_unix: u64,
    wall_seconds: f64,
    files: Vec<FileEntry<'a>>,
    violations: &'a [Violation],
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// Writes every report file, then the manifest last so that its presence
/// marks a complete run.
pub fn write_report(
    cfg: &ExperimentConfig,
    report: &Report,
    started_unix: u64,
    wall_seconds: f64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    let mut files: Vec<&(String, Vec<u8>)> = report.files.iter().collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, body) in &files {
        write_atomic(&cfg.out, name, body)?;
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "zrlab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.to_string(),
        config: cfg,
        config_sha256: config_hash(cfg),
        seeds: &cfg.seeds,
        threads: rayon::current_num_threads(),
        started_unix,
        wall_seconds,
        files: files
            .iter()
            .map(|(name, body)| FileEntry {
                name,
                bytes: body.len(),
                sha256: sha256_hex(body),
            })
            .collect(),
        violations: &report.violations,
    };
    let mut body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    body.push(b'\n');
    write_atomic(&cfg.out, "manifest.json", &body)
}
