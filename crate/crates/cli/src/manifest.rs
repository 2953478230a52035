//! Per-stage `manifest.json`: config hash plus content hashes of every
//! input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stage: String,
    pub config_sha256: String,
    /// Seed handed to the stage, if it consumes randomness.
    pub seed: Option<u64>,
    /// Paths relative to the workdir where possible.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn display_path(workdir: &Path, path: &Path) -> String {
    path.strip_prefix(workdir)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Collects hashes as a stage runs and writes them out at the end.
pub struct ManifestBuilder<'a> {
    workdir: &'a Path,
    manifest: Manifest,
}

impl<'a> ManifestBuilder<'a> {
    pub fn new(workdir: &'a Path, stage: &str, config_sha256: String, seed: Option<u64>) -> Self {
        Self {
            workdir,
            manifest: Manifest {
                version: MANIFEST_VERSION,
                stage: stage.to_string(),
                config_sha256,
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.manifest.inputs.insert(display_path(self.workdir, path), h);
        Ok(())
    }

    pub fn inputs<I: IntoIterator<Item = PathBuf>>(&mut self, paths: I) -> Result<()> {
        paths.into_iter().try_for_each(|p| self.input(&p))
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.manifest.outputs.insert(display_path(self.workdir, path), h);
        Ok(())
    }

    pub fn outputs<I: IntoIterator<Item = PathBuf>>(&mut self, paths: I) -> Result<()> {
        paths.into_iter().try_for_each(|p| self.output(&p))
    }

    pub fn write(self, stage_dir: &Path) -> Result<Manifest> {
        let path = stage_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(stage_dir: &Path) -> Result<Manifest> {
    let path = stage_dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}
