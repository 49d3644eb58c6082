use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved configuration; replay runs from this alone.
    pub config: serde_json::Value,
    pub seed: u64,
    pub argv: Vec<String>,
    pub inputs: Vec<FileDigest>,
    /// Deterministic outputs. Timing files are excluded.
    pub outputs: Vec<FileDigest>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
    pub started: String,
    pub finished: String,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Write via a temporary file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_output(out: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = out.join(name);
    write_atomic(&path, contents.as_bytes())?;
    Ok(path)
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&out.join(MANIFEST), json.as_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Fails when a recorded input no longer matches its digest.
    pub fn check_inputs(&self) -> CliResult<()> {
        for input in &self.inputs {
            let now = sha256_file(Path::new(&input.path))?;
            if now != input.sha256 {
                return Err(CliError::Data(format!("{} changed since the recorded run", input.path)));
            }
        }
        Ok(())
    }
}

pub fn digests(out: &Path, names: &[&str]) -> CliResult<Vec<FileDigest>> {
    names
        .iter()
        .map(|n| Ok(FileDigest { path: n.to_string(), sha256: sha256_file(&out.join(n))? }))
        .collect()
}
