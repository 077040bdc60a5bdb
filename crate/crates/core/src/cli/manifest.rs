use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::hex;

use super::RunConfig;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
    pub files: usize,
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub crate_version: String,
    pub seed: u64,
    pub jobs: usize,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Content hash of a file, or of a directory tree (relative paths and file
/// contents in sorted order).
pub fn hash_path(path: &Path) -> Result<InputHash> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    let mut h = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(path).unwrap_or(f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(InputHash {
        path: path.to_path_buf(),
        sha256: hex(&h.finalize()),
        files: files.len(),
    })
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    crate::eval::write_json(&out.join(RUN_MANIFEST_FILE), manifest)?;
    crate::eval::write_text(&out.join(EFFECTIVE_CONFIG_FILE), &manifest.config.to_toml())
}
