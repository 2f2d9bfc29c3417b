use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::ArchConfig;
use super::network::{Network, ParamEntry};
use super::train::Model;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "model.json";
const WEIGHTS_FILE: &str = "weights.f32";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    schema_version: u32,
    arch: ArchConfig,
    params: Vec<ParamEntry>,
    param_count: usize,
    layout_hash: String,
    epochs_seen: usize,
    seed: u64,
}

/// Hash over the parameter layout; two networks with equal hashes can
/// exchange weights.
pub fn layout_hash(manifest: &[ParamEntry]) -> String {
    let mut h = Sha256::new();
    for e in manifest {
        h.update(e.name.as_bytes());
        for d in &e.shape {
            h.update((*d as u64).to_le_bytes());
        }
        h.update((e.offset as u64).to_le_bytes());
        h.update([e.trainable as u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `model.json` and little-endian `weights.f32` into `dir`.
pub fn save_model(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_VERSION,
        arch: model.net.arch.clone(),
        params: model.net.manifest().to_vec(),
        param_count: model.net.param_count(),
        layout_hash: layout_hash(model.net.manifest()),
        epochs_seen: model.epochs_seen,
        seed: model.seed,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = model.net.params.iter().flat_map(|p| p.to_le_bytes()).collect();
    let path = dir.join(WEIGHTS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Loads a checkpoint written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<Model> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&text)?;
    if manifest.schema_version != CHECKPOINT_VERSION {
        return Err(Error::SchemaVersion {
            found: manifest.schema_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut net = Network::<f32>::zeros(&manifest.arch)?;
    let expected = layout_hash(net.manifest());
    if manifest.layout_hash != expected || layout_hash(&manifest.params) != expected {
        return Err(Error::Checkpoint(format!(
            "parameter layout of {} does not match architecture {}",
            dir.display(),
            manifest.arch.name
        )));
    }
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != net.param_count() * 4 {
        return Err(Error::Checkpoint(format!(
            "weights file holds {} bytes, expected {}",
            bytes.len(),
            net.param_count() * 4
        )));
    }
    for (p, b) in net.params.iter_mut().zip(bytes.chunks_exact(4)) {
        *p = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    }
    Ok(Model {
        net,
        epochs_seen: manifest.epochs_seen,
        seed: manifest.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::Canvas;

    fn tiny(name: &str) -> ArchConfig {
        ArchConfig::preset_with_widths(name, Canvas::square(16), [2, 2, 2, 2]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(&tiny("VGG05").with_batch_norm(true), 3).unwrap();
        save_model(&model, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.net.params, model.net.params);
        assert_eq!(back.net.arch, model.net.arch);
        assert_eq!(back.seed, 3);
    }

    #[test]
    fn rejects_layout_from_other_arch() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(&tiny("VGG05"), 3).unwrap();
        save_model(&model, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut m: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        m["arch"] = serde_json::to_value(tiny("VGG07")).unwrap();
        fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_short_weights() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(&tiny("VGG05"), 3).unwrap();
        save_model(&model, dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Checkpoint(_))));
    }
}
