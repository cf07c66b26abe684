//! On-disk experiment store: a directory locked to one configuration, with
//! a manifest tracking which stages completed and the digests of what they
//! wrote.

use crate::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use soelab_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

const MANIFEST_FORMAT: &str = "soelab-manifest";
const MANIFEST_VERSION: u32 = 1;

/// One output file of a completed stage, addressed by content digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Store-relative path.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub completed_at: u64,
    pub outputs: Vec<ArtifactRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config_digest: String,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    fn new(config_digest: String) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            config_digest,
            stages: BTreeMap::new(),
        }
    }
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// An experiment directory. Opening it with a different configuration than
/// the one it was created with is refused: a completed experiment is
/// one-shot, new settings get a new store.
#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
    config: ExperimentConfig,
    manifest: Manifest,
}

impl RunStore {
    /// Open or create a store.
    ///
    /// `requested`: a config the caller wants to apply, if any. A new store
    /// adopts it (or the defaults); an existing store requires it to match
    /// the stored one exactly.
    pub fn open(root: &Path, requested: Option<ExperimentConfig>) -> Result<RunStore> {
        std::fs::create_dir_all(root)?;
        let config_path = root.join("config.toml");
        let manifest_path = root.join("manifest.json");
        if config_path.exists() {
            let stored = ExperimentConfig::load(&config_path)?;
            if let Some(req) = requested {
                if req.digest() != stored.digest() {
                    return Err(Error::invalid(
                        "run store",
                        format!(
                            "{} is locked to a different configuration; use a new store directory",
                            root.display()
                        ),
                    ));
                }
            }
            let manifest: Manifest = if manifest_path.exists() {
                serde_json::from_slice(&std::fs::read(&manifest_path)?)?
            } else {
                Manifest::new(stored.digest())
            };
            if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
                return Err(Error::Format("unrecognized manifest".to_string()));
            }
            if manifest.config_digest != stored.digest() {
                return Err(Error::invalid(
                    "run store",
                    "manifest and config disagree; the store is corrupt",
                ));
            }
            Ok(RunStore {
                root: root.to_path_buf(),
                config: stored,
                manifest,
            })
        } else {
            let config = requested.unwrap_or_default();
            config.validate()?;
            config.save(&config_path)?;
            let manifest = Manifest::new(config.digest());
            let store = RunStore {
                root: root.to_path_buf(),
                config,
                manifest,
            };
            store.save_manifest()?;
            Ok(store)
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Absolute path for a store-relative artifact path, creating parent
    /// directories.
    pub fn path(&self, rel: &str) -> PathBuf {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        p
    }

    /// A stage counts as complete when the manifest records it and every
    /// recorded output still exists. Deleting outputs re-arms the stage.
    pub fn is_complete(&self, stage: &str) -> bool {
        match self.manifest.stages.get(stage) {
            None => false,
            Some(entry) => entry.outputs.iter().all(|a| self.root.join(&a.path).exists()),
        }
    }

    /// Record a stage's outputs (store-relative paths) and persist the
    /// manifest.
    pub fn record_stage(&mut self, stage: &str, outputs: &[String]) -> Result<()> {
        let mut refs = Vec::with_capacity(outputs.len());
        for rel in outputs {
            let path = self.root.join(rel);
            if !path.exists() {
                return Err(Error::invalid(
                    "run store",
                    format!("stage {stage} claims missing output {rel}"),
                ));
            }
            refs.push(ArtifactRef {
                path: rel.clone(),
                sha256: file_sha256(&path)?,
            });
        }
        self.manifest.stages.insert(
            stage.to_string(),
            StageEntry {
                completed_at: now_unix(),
                outputs: refs,
            },
        );
        self.save_manifest()
    }

    /// Recorded outputs of a completed stage.
    pub fn stage_outputs(&self, stage: &str) -> Option<&[ArtifactRef]> {
        self.manifest.stages.get(stage).map(|e| e.outputs.as_slice())
    }

    fn save_manifest(&self) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        std::fs::write(self.root.join("manifest.json"), bytes)?;
        Ok(())
    }

    /// Write JSON with a stable, human-readable layout.
    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(value)?;
        std::fs::write(self.path(rel), bytes)?;
        Ok(())
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> Result<T> {
        let path = self.root.join(rel);
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::invalid("run store", format!("{rel}: {e}")))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_store_writes_config_and_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path(), None).unwrap();
        assert!(dir.path().join("config.toml").exists());
        assert!(dir.path().join("manifest.json").exists());
        assert_eq!(store.config(), &ExperimentConfig::default());
        assert!(!store.is_complete("scenarios"));
    }

    #[test]
    fn reopening_with_a_different_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::default();
        config.experiment_seed = 11;
        RunStore::open(dir.path(), Some(config.clone())).unwrap();

        // Same config is fine, and no config at all adopts the stored one.
        RunStore::open(dir.path(), Some(config.clone())).unwrap();
        let reopened = RunStore::open(dir.path(), None).unwrap();
        assert_eq!(reopened.config().experiment_seed, 11);

        let mut other = config;
        other.experiment_seed = 12;
        let err = RunStore::open(dir.path(), Some(other)).unwrap_err();
        assert!(err.to_string().contains("locked"));
    }

    #[test]
    fn stage_completion_tracks_output_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = RunStore::open(dir.path(), None).unwrap();
        std::fs::write(store.path("scenarios/train.json"), b"{}").unwrap();
        store
            .record_stage("scenarios", &["scenarios/train.json".to_string()])
            .unwrap();
        assert!(store.is_complete("scenarios"));
        let outs = store.stage_outputs("scenarios").unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].sha256.len(), 64);

        // Deleting an output re-arms the stage, and reopening agrees.
        std::fs::remove_file(dir.path().join("scenarios/train.json")).unwrap();
        assert!(!store.is_complete("scenarios"));
        let reopened = RunStore::open(dir.path(), None).unwrap();
        assert!(!reopened.is_complete("scenarios"));

        // Claiming a missing output is an error.
        assert!(store
            .record_stage("collect", &["dataset/train.bin".to_string()])
            .is_err());
    }
}
