//! Run directories and per-stage manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SUBDIRS: [&str; 5] = ["datasets", "checkpoints", "scores", "attributions", "report"];

/// Pipeline stages in execution order, with the directory each writes to.
pub const STAGES: [(&str, &str); 6] = [
    ("gen", "datasets"),
    ("train", "checkpoints"),
    ("calibrate", "scores"),
    ("score", "scores"),
    ("attribute", "attributions"),
    ("report", "report"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
    pub summary: Value,
}

#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
    pub hash: String,
}

fn stage_dir(stage: &str) -> &'static str {
    STAGES
        .iter()
        .find(|(s, _)| *s == stage)
        .map(|(_, d)| *d)
        .unwrap_or("report")
}

impl RunDir {
    /// Creates `<out>/<timestamp>-<hash>` with its stage subdirectories.
    pub fn create(cfg: &RunConfig) -> CliResult<Self> {
        let hash = cfg.hash();
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%3fZ");
        let mut root = cfg.out_dir.join(format!("{stamp}-{hash}"));
        let mut n = 1;
        while root.exists() {
            root = cfg.out_dir.join(format!("{stamp}.{n}-{hash}"));
            n += 1;
        }
        for s in SUBDIRS {
            let d = root.join(s);
            fs::create_dir_all(&d).map_err(|e| CliError::io(format!("creating {}", d.display()), e))?;
        }
        Ok(RunDir { root, hash })
    }

    /// Uses `explicit` when given, otherwise the newest run under the
    /// output directory whose name ends in the config hash.
    pub fn locate(cfg: &RunConfig, explicit: Option<&Path>) -> CliResult<Self> {
        let hash = cfg.hash();
        if let Some(p) = explicit {
            if !p.is_dir() {
                return Err(CliError::MissingArtifact {
                    stage: "gen",
                    path: p.to_path_buf(),
                });
            }
            return Ok(RunDir {
                root: p.to_path_buf(),
                hash,
            });
        }
        let suffix = format!("-{hash}");
        let newest = fs::read_dir(&cfg.out_dir)
            .ok()
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(&suffix)))
            .max();
        newest.map(|root| RunDir { root, hash: hash.clone() }).ok_or_else(|| CliError::MissingArtifact {
            stage: "gen",
            path: cfg.out_dir.join(format!("*{suffix}")),
        })
    }

    /// `locate`, falling back to a fresh run directory.
    pub fn locate_or_create(cfg: &RunConfig, explicit: Option<&Path>) -> CliResult<Self> {
        match Self::locate(cfg, explicit) {
            Ok(r) => Ok(r),
            Err(CliError::MissingArtifact { .. }) if explicit.is_none() => Self::create(cfg),
            Err(e) => Err(e),
        }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join(stage_dir(stage)).join(format!("{stage}.manifest.json"))
    }

    /// Hashes `files` (relative to the run root) into the stage manifest.
    pub fn write_manifest(&self, stage: &str, cfg: &RunConfig, files: &[PathBuf], summary: Value) -> CliResult<()> {
        let mut entries = Vec::with_capacity(files.len());
        for f in files {
            let full = self.root.join(f);
            let bytes = fs::read(&full).map_err(|e| CliError::io(format!("reading {}", full.display()), e))?;
            entries.push(FileEntry {
                path: f.to_string_lossy().replace('\\', "/"),
                sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
                bytes: bytes.len() as u64,
            });
        }
        let m = Manifest {
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
            seed: cfg.seed,
            files: entries,
            summary,
        };
        write_json(&self.manifest_path(stage), &m)
    }

    /// Loads the manifest of an upstream stage, failing with an actionable
    /// error when it is missing or was written under another config.
    pub fn require(&self, stage: &'static str) -> CliResult<Manifest> {
        let path = self.manifest_path(stage);
        if !path.exists() {
            return Err(CliError::MissingArtifact { stage, path });
        }
        let m: Manifest = read_json(&path)?;
        if m.config_hash != self.hash {
            return Err(CliError::StaleArtifact {
                stage,
                path,
                found: m.config_hash,
                expected: self.hash.clone(),
            });
        }
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}
