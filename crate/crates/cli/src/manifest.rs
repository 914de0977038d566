use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: Value,
    pub threads: Option<usize>,
    pub started_unix: f64,
    pub inputs: Vec<FileHash>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<FileHash>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Value>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn hash_file(path: &Path) -> CliResult<FileHash> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Value, seeds: Value, threads: Option<usize>, inputs: &[&Path]) -> CliResult<Self> {
        Ok(Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            args: std::env::args().collect(),
            config,
            seeds,
            threads,
            started_unix: now(),
            inputs: inputs.iter().map(|p| hash_file(p)).collect::<CliResult<_>>()?,
            finished_unix: None,
            outputs: Vec::new(),
            timing: None,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Records output hashes and rewrites the manifest.
    pub fn finish(&mut self, path: &Path, outputs: &[PathBuf]) -> CliResult<()> {
        self.finished_unix = Some(now());
        self.outputs = outputs.iter().map(|p| hash_file(p)).collect::<CliResult<_>>()?;
        self.write(path)
    }
}

/// `<file>.manifest.json` next to a single-file output.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
