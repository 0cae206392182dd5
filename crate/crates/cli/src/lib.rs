//! Experiment runner: resolves a config, dispatches to a registered
//! experiment, writes one CSV per report plus `manifest.json`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod registry;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use weakcoupling::report::ExperimentReport;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use manifest::Manifest;
pub use registry::{Experiment, Registry};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "WCL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "wcl-output";

#[derive(Clone, Debug, Default)]
pub struct ExecOptions {
    /// Overrides the config's `output_dir`.
    pub output_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub serial: bool,
}

impl ExecOptions {
    pub fn serial_in(dir: impl Into<PathBuf>) -> Self {
        Self { output_dir: Some(dir.into()), threads: None, serial: true }
    }
}

/// Command line, then config, then `WCL_OUTPUT_DIR`, then `wcl-output`.
pub fn output_root(opts: &ExecOptions, cfg: &ExperimentConfig) -> PathBuf {
    opts.output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

pub fn resolve_config(
    registry: &Registry,
    experiment: &str,
    file: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig, CliError> {
    let e = registry.lookup(experiment)?;
    ExperimentConfig::resolve(e.defaults(), file, overrides)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    /// Directory holding the CSVs and the manifest.
    pub dir: PathBuf,
    pub reports: Vec<ExperimentReport>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Runs the experiment named in `cfg` and writes its outputs under `<root>/<experiment>/`.
pub fn run(registry: &Registry, cfg: &ExperimentConfig, opts: &ExecOptions) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let experiment = registry.lookup(&cfg.experiment)?;
    let threads = if opts.serial { 1 } else { opts.threads.unwrap_or_else(rayon::current_num_threads) };
    if threads == 0 {
        return Err(CliError::Usage { field: "--threads".into(), message: "must be at least 1".into() });
    }
    let input_hash = manifest::input_hash(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Manifest(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let reports = pool.install(|| experiment.run(cfg))?;
    let elapsed = start.elapsed().as_secs_f64();

    let dir = output_root(opts, cfg).join(&cfg.experiment);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    let mut outputs = BTreeMap::new();
    let mut summaries = Vec::new();
    for r in &reports {
        let s = manifest::ReportSummary::of(r);
        if outputs.contains_key(&s.file) || s.file == manifest::MANIFEST_FILE {
            return Err(CliError::Manifest(format!("duplicate output file {}", s.file)));
        }
        let csv = r.to_csv();
        write(&dir.join(&s.file), csv.as_bytes())?;
        outputs.insert(s.file.clone(), manifest::content_hash(csv.as_bytes()));
        summaries.push(s);
    }
    let manifest = Manifest {
        schema_version: manifest::SCHEMA_VERSION,
        experiment: cfg.experiment.clone(),
        config: cfg.clone(),
        input_hash,
        outputs,
        passed: reports.iter().all(|r| r.all_passed()),
        reports: summaries,
        runtime: manifest::Runtime {
            threads,
            serial: threads == 1,
            elapsed_seconds: elapsed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    write(&dir.join(manifest::MANIFEST_FILE), manifest.to_json().as_bytes())?;
    Ok(RunOutcome { manifest, dir, reports })
}

#[derive(Debug)]
pub struct RerunOutcome {
    pub outcome: RunOutcome,
    /// Output files whose content differs from the manifest, or that are missing on either side.
    pub mismatches: Vec<String>,
}

impl RerunOutcome {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-executes the run recorded in `manifest_path` and compares output hashes.
///
/// Without an explicit output directory the rerun lands in `rerun/` next to the manifest.
pub fn rerun(registry: &Registry, manifest_path: &Path, opts: &ExecOptions) -> Result<RerunOutcome, CliError> {
    let old = Manifest::read(manifest_path)?;
    let hash = manifest::input_hash(&old.config)?;
    if hash != old.input_hash {
        return Err(CliError::Manifest(format!(
            "inputs changed since the recorded run: hash {hash} vs {}",
            old.input_hash
        )));
    }
    let mut opts = opts.clone();
    if opts.output_dir.is_none() {
        let parent = manifest_path.parent().unwrap_or(Path::new("."));
        opts.output_dir = Some(parent.join("rerun"));
    }
    let outcome = run(registry, &old.config, &opts)?;
    let new = &outcome.manifest.outputs;
    let mut mismatches: Vec<String> = old
        .outputs
        .iter()
        .filter(|(f, h)| new.get(*f) != Some(*h))
        .map(|(f, _)| f.clone())
        .collect();
    mismatches.extend(new.keys().filter(|f| !old.outputs.contains_key(*f)).cloned());
    Ok(RerunOutcome { outcome, mismatches })
}
