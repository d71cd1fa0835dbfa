//! Command-line laboratory on top of `freq-lab-core`: run configuration, field
//! files, CSV/JSON output and the `ode`, `solve`, `frequency`, `audit` and
//! `check` commands.
//!
//! Exit codes: `0` success, `1` a check in scope failed, `2` configuration or
//! input error, `3` non-convergence, and for `audit` `4` contradiction
//! certified, `5` residual veto, `6` inconclusive.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod commands;
pub mod config;
pub mod formats;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use commands::{run, Command, Invocation, Outcome};
pub use config::RunConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RECORD_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] freq_lab_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use freq_lab_core::Error as E;
        match self {
            CliError::Core(E::NonConvergence { .. } | E::LinearSolve { .. } | E::QuadratureNonConvergence { .. } | E::IntegrationBlowUp { .. }) => {
                EXIT_NON_CONVERGENCE
            }
            _ => EXIT_CONFIG,
        }
    }
}

/// `--out` beats `FREQ_LAB_OUT`, which beats the config file.
pub fn resolve_output_dir(config: &RunConfig, flag: Option<&Path>, env: Option<&str>) -> PathBuf {
    match (flag, env) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(e)) if !e.is_empty() => PathBuf::from(e),
        _ => config.output_dir.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes output files into one directory and keeps their manifest.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    manifest: Vec<ManifestEntry>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            manifest: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), contents)?;
        self.manifest.retain(|m| m.file != name);
        self.manifest.push(ManifestEntry {
            file: name.to_string(),
            sha256: formats::sha256_hex(&[contents.as_bytes()]),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }
}

/// What a command did; appended as one JSON line to `runs.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub input_hash: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<ManifestEntry>,
    pub verdicts: BTreeMap<String, serde_json::Value>,
    pub exit_code: i32,
}

impl RunRecord {
    pub fn append_to(&self, dir: &Path) -> Result<(), CliError> {
        let line = serde_json::to_string(&serde_json::to_value(self).expect("serializable")).expect("serializable");
        let mut f = fs::OpenOptions::new().create(true).append(true).open(dir.join("runs.jsonl"))?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

pub(crate) fn now_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
