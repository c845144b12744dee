//! Run manifests: the effective config, seeds, timings, per-initialization
//! scores and a digest inventory of every emitted file. A manifest plus the
//! raw inputs is enough to replay a run and check digest equality.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::EffectiveConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: EffectiveConfig,
    pub stage_seconds: Vec<(String, f64)>,
    /// Mean retained log joint per initialization, when the command fit.
    pub init_scores: Option<Vec<f64>>,
    pub selected_init: Option<usize>,
    pub outputs: Vec<FileRecord>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    root: PathBuf,
    stage_start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &EffectiveConfig) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                config: config.clone(),
                stage_seconds: Vec::new(),
                init_scores: None,
                selected_init: None,
                outputs: Vec::new(),
            },
            root: config.output_dir.clone(),
            stage_start: Instant::now(),
        }
    }

    /// Records the wall time since the previous stage boundary.
    pub fn stage(&mut self, name: &str) {
        let dt = self.stage_start.elapsed().as_secs_f64();
        self.manifest.stage_seconds.push((name.to_string(), dt));
        self.stage_start = Instant::now();
    }

    pub fn set_init_scores(&mut self, scores: Vec<f64>, selected: usize) {
        self.manifest.init_scores = Some(scores);
        self.manifest.selected_init = Some(selected);
    }

    /// Registers an emitted file, hashing its content.
    pub fn record(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::io(format!("cannot hash {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        self.manifest.outputs.push(FileRecord {
            path: rel.to_string_lossy().into_owned(),
            sha256: format!("{digest:x}"),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes the manifest atomically (temp file + rename).
    pub fn finish(mut self, name: &str) -> Result<PathBuf, CliError> {
        self.stage("finalize");
        self.manifest.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let path = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| CliError::io(format!("cannot write manifest: {e}")))?;
        Ok(path)
    }
}

/// Hex SHA-256 of a file, for digest comparisons in tests and reports.
pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::io(format!("cannot hash {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
