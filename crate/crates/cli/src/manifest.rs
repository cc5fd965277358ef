//! Run manifests and atomic output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Marker used in place of a path for standard output.
pub const STDOUT: &str = "-";

/// One artifact produced by a command, held in memory until committed.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn file(path: impl AsRef<Path>, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            path: path.as_ref().to_string_lossy().into_owned(),
            bytes: bytes.into(),
        }
    }

    pub fn stdout(text: impl Into<String>) -> Self {
        Self {
            path: STDOUT.into(),
            bytes: text.into().into_bytes(),
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, enough to re-run the command.
    pub argv: Vec<String>,
    /// Fully resolved parameters, defaults included.
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub duration_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::Internal(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Default manifest location: next to the first file output, else in the
/// working directory.
pub fn default_manifest_path(command: &str, artifacts: &[Artifact]) -> PathBuf {
    match artifacts.iter().find(|a| a.path != STDOUT) {
        Some(a) => PathBuf::from(format!("{}.manifest.json", a.path)),
        None => PathBuf::from(format!("hmopt-{command}.manifest.json")),
    }
}
