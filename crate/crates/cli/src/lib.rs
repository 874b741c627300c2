//! Config-driven experiment runner for `weyl-core`.
//!
//! A run reads one JSON config, computes, writes plot-ready CSVs and a
//! `summary.json`, and reports an exit status: 0 when every check passes,
//! 1 on a failed check, 2 on a bad config and 3 when a numerical module
//! reports an error.

pub mod config;
pub mod experiments;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use config::{ConfigError, ExperimentConfig, Resolved};
use experiments::{run_experiment, Outcome, Summary};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MODULE: i32 = 3;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Module(weyl_core::Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Module(_) | RunError::Io(_) => EXIT_MODULE,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Module(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// Reads, parses and resolves a config file.
pub fn load_config(path: &Path) -> Result<Resolved, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)?.resolve()
}

/// What a run produced.
#[derive(Debug)]
pub struct RunReport {
    pub summary: Summary,
    pub files: Vec<PathBuf>,
    /// The module error, if the computation failed.
    pub error: Option<RunError>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code(),
            None if self.summary.pass => EXIT_PASS,
            None => EXIT_CHECK_FAILED,
        }
    }
}

fn output_name(prefix: &str, stem: &str, ext: &str) -> String {
    if prefix.is_empty() {
        format!("{stem}.{ext}")
    } else {
        format!("{prefix}_{stem}.{ext}")
    }
}

/// Runs a resolved experiment and writes its artifacts to `out_dir`.
/// `threads` overrides the config's thread count.
pub fn run(mut resolved: Resolved, out_dir: &Path, threads: Option<usize>) -> Result<RunReport, RunError> {
    if threads.is_some() {
        resolved.config.threads = threads;
    }
    if resolved.config.threads == Some(0) {
        return Err(RunError::Config(ConfigError("threads must be positive".into())));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = resolved.config.threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| RunError::Io(e.to_string()))?;
    let result = pool.install(|| run_experiment(&resolved));

    fs::create_dir_all(out_dir).map_err(|e| RunError::Io(format!("{}: {e}", out_dir.display())))?;
    let prefix = resolved.config.output_prefix.clone();
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => (Outcome::default(), Some(RunError::Module(e))),
    };
    let mut files = Vec::new();
    for (stem, contents) in &outcome.csvs {
        let path = out_dir.join(output_name(&prefix, stem, "csv"));
        fs::write(&path, contents).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        files.push(path);
    }
    let summary = Summary {
        experiment: resolved.config.experiment,
        pass: error.is_none() && outcome.checks.iter().all(|c| c.pass),
        inputs: resolved.config,
        constants: outcome.constants,
        checks: outcome.checks,
        error: error.as_ref().map(ToString::to_string),
    };
    let path = out_dir.join(output_name(&prefix, "summary", "json"));
    let json = serde_json::to_string_pretty(&summary).map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(RunReport { summary, files, error })
}
