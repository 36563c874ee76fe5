//! Run manifests: enough to rerun a command and check its outputs.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
    /// Resolved settings; `vlearn <command> --config <manifest>` reruns.
    pub config: toml::Table,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects outputs while a command runs.
pub struct Recorder {
    command: String,
    settings: Settings,
    seed: u64,
    started: SystemTime,
    clock: Instant,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(command: &str, settings: &Settings, seed: u64) -> Self {
        Recorder {
            command: command.into(),
            settings: settings.clone(),
            seed,
            started: SystemTime::now(),
            clock: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Hashes the outputs and writes the manifest to `path`.
    pub fn finish(self, path: &Path) -> Result<Manifest, CliError> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(OutputRecord {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            outputs,
            config: self.settings.to_table(),
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
        Ok(manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
}

/// `data.csv` → `data.manifest.toml`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.toml")
}
