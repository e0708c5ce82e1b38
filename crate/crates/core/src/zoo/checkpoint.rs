// SPDX-License-Identifier: Apache-2.0

//! On-disk checkpoints: `meta.json` (architecture, recipe, provenance) plus
//! `weights.bin` (little-endian f32 parameters).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{Architectures, ModelSpec};
use super::config::TrainConfig;
use super::model::Model;
use crate::access::Access;
use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub architecture_id: String,
    pub spec: ModelSpec,
    pub embedding_layer: String,
    pub train_config: Option<TrainConfig>,
    /// Content hash of the dataset manifest the model was trained against.
    pub dataset_manifest_hash: Option<String>,
    /// Access level the assessor holds for this model.
    pub access: Access,
    pub weights_sha256: String,
    pub param_count: usize,
    /// Free-form provenance, e.g. query-set and target hashes for stolen models.
    #[serde(default)]
    pub provenance: std::collections::BTreeMap<String, String>,
}

fn weights_bytes(params: &[f32]) -> Vec<u8> {
    params.iter().flat_map(|p| p.to_le_bytes()).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save(
    dir: &Path,
    model: &Model,
    access: Access,
    train_config: Option<&TrainConfig>,
    dataset_manifest_hash: Option<&str>,
    provenance: std::collections::BTreeMap<String, String>,
) -> Result<CheckpointMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = weights_bytes(model.network().params());
    let meta = CheckpointMeta {
        architecture_id: model.architecture_id().to_string(),
        spec: model.spec().clone(),
        embedding_layer: model.embedding_layer().to_string(),
        train_config: train_config.cloned(),
        dataset_manifest_hash: dataset_manifest_hash.map(str::to_string),
        access,
        weights_sha256: sha256_hex(&bytes),
        param_count: model.network().param_count(),
        provenance,
    };
    let wpath = dir.join("weights.bin");
    fs::write(&wpath, &bytes).map_err(|e| Error::io(&wpath, e))?;
    let mpath = dir.join("meta.json");
    fs::write(&mpath, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mpath, e))?;
    Ok(meta)
}

pub fn load_meta(dir: &Path) -> Result<CheckpointMeta> {
    let mpath = dir.join("meta.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a checkpoint, verifying the weight hash.
pub fn load(dir: &Path) -> Result<(Model, CheckpointMeta)> {
    let meta = load_meta(dir)?;
    let wpath = dir.join("weights.bin");
    let bytes = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
    if sha256_hex(&bytes) != meta.weights_sha256 {
        return Err(Error::Serde(format!(
            "{}: weight hash does not match metadata",
            wpath.display()
        )));
    }
    if bytes.len() % 4 != 0 {
        return Err(Error::Serde("weights file is not a whole number of f32".into()));
    }
    let params: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let layout = Architectures::builtin().layout(&meta.spec)?;
    let network = Network::from_parts(meta.spec.input_shape.clone(), layout.layers, Some(params))?;
    let model = Model::from_network(meta.spec.clone(), network, meta.embedding_layer.clone())?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::arch::SIMPLE_CNN_SMALL;

    #[test]
    fn save_load_preserves_parameters_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::init(&ModelSpec::new(SIMPLE_CNN_SMALL, 4, 1), 3).unwrap();
        let cfg = TrainConfig::standard_recipe();
        save(dir.path(), &model, Access::BlackBox, Some(&cfg), Some("abc"), Default::default()).unwrap();
        let (back, meta) = load(dir.path()).unwrap();
        assert_eq!(back.network().params(), model.network().params());
        assert_eq!(meta.access, Access::BlackBox);
        assert_eq!(meta.train_config, Some(cfg));

        let mut bytes = fs::read(dir.path().join("weights.bin")).unwrap();
        bytes[0] ^= 1;
        fs::write(dir.path().join("weights.bin"), bytes).unwrap();
        assert!(load(dir.path()).is_err());
    }
}
