//! Run manifest: config echo, content hashes and the outcome of every check.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use weakcoupling::report::{Check, ExperimentReport, SlopeFit};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Git-style object hash: `sha256("blob <len>\0" ++ bytes)`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of everything that determines the outputs: the config without its
/// output directory, followed by the potential table when one is used.
pub fn input_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut c = cfg.clone();
    c.output_dir = None;
    let mut bytes = serde_json::to_vec(&c).map_err(|e| CliError::Manifest(e.to_string()))?;
    if c.potential.kind == "table" {
        if let Some(path) = &c.potential.table {
            bytes.push(b'\n');
            bytes.extend(std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?);
        }
    }
    Ok(content_hash(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub checks: Vec<Check>,
    pub fits: Vec<SlopeFit>,
    pub notes: Vec<String>,
}

impl ReportSummary {
    pub fn of(r: &ExperimentReport) -> Self {
        Self {
            name: r.name.clone(),
            file: format!("{}.csv", r.name),
            rows: r.rows.len(),
            checks: r.checks.clone(),
            fits: r.fits.clone(),
            notes: r.notes.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub threads: usize,
    pub serial: bool,
    pub elapsed_seconds: f64,
    pub tool_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub input_hash: String,
    /// Output file name to content hash.
    pub outputs: BTreeMap<String, String>,
    pub reports: Vec<ReportSummary>,
    pub passed: bool,
    pub runtime: Runtime,
}

impl Manifest {
    pub fn failed_checks(&self) -> Vec<String> {
        self.reports
            .iter()
            .flat_map(|r| r.checks.iter().filter(|c| !c.passed).map(move |c| format!("{}: {} ({})", r.name, c.name, c.detail)))
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Manifest(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }

    #[test]
    fn output_dir_does_not_change_the_input_hash() {
        let mut c = ExperimentConfig::defaults_for("scatter");
        let h = input_hash(&c).unwrap();
        c.output_dir = Some("elsewhere".into());
        assert_eq!(input_hash(&c).unwrap(), h);
        c.seed += 1;
        assert_ne!(input_hash(&c).unwrap(), h);
    }
}
