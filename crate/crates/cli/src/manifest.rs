//! Per-run manifest: effective config, its hash, the seed, format versions and
//! SHA-256 digests of every input and output file.

use crate::config::RunConfig;
use crate::error::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub scorecast: &'static str,
    pub cf_model_format: u32,
    pub attentive_model_format: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub versions: Versions,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// SHA-256 of the config's canonical JSON encoding.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

fn digest(out_dir: &Path, path: &Path) -> Result<FileDigest, CliError> {
    let data = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let shown = path.strip_prefix(out_dir).unwrap_or(path);
    Ok(FileDigest {
        path: shown.to_string_lossy().replace('\\', "/"),
        bytes: data.len() as u64,
        sha256: sha256_hex(&data),
    })
}

/// Tracks the files a command reads and writes.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Artifacts {
    pub fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|x| x == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub fn output(&mut self, p: &Path) {
        if !self.outputs.iter().any(|x| x == p) {
            self.outputs.push(p.to_path_buf());
        }
    }
}

/// Write `<out_dir>/manifests/<command>.json` and return its path.
pub fn write(out_dir: &Path, command: &str, cfg: &RunConfig, art: &Artifacts) -> Result<PathBuf, CliError> {
    let m = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        command: command.to_string(),
        seed: cfg.seed,
        config_sha256: config_hash(cfg),
        config: cfg.clone(),
        versions: Versions {
            scorecast: env!("CARGO_PKG_VERSION"),
            cf_model_format: scorecast_core::cf::CF_FORMAT_VERSION,
            attentive_model_format: scorecast_core::attentive::AM_FORMAT_VERSION,
        },
        inputs: art.inputs.iter().map(|p| digest(out_dir, p)).collect::<Result<_, _>>()?,
        outputs: art.outputs.iter().map(|p| digest(out_dir, p)).collect::<Result<_, _>>()?,
    };
    let dir = out_dir.join("manifests");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{command}.json"));
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_reference() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn config_hash_tracks_changes() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.cf.k += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
