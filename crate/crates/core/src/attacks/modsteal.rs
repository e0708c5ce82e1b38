// SPDX-License-Identifier: Apache-2.0

//! Model stealing: train a copy of the target's architecture to match its
//! posteriors on auxiliary queries.

use std::collections::BTreeMap;

use crate::access::TargetModelHandle;
use crate::data::LabeledImageDataset;
use crate::error::{Error, Result};
use crate::eval::metrics::agreement_rate;
use crate::nn::{OptimizerKind, Tensor};
use crate::zoo::checkpoint::sha256_hex;
use crate::zoo::{fit, LossKind, Model, ModelSpec, Targets, TrainConfig};

/// MSE on posteriors, SGD with momentum 0.9 at 1e-2, 50 epochs.
pub fn default_steal_config() -> TrainConfig {
    TrainConfig::constant(OptimizerKind::SgdMomentum, 1e-2, 50, LossKind::MseOnPosteriors)
}

#[derive(Clone, Debug)]
pub struct StolenModel {
    pub model: Model,
    pub loss_history: Vec<f64>,
    /// `query_set_sha256` and `target_architecture`.
    pub provenance: BTreeMap<String, String>,
}

fn tensor_hash(t: &Tensor) -> String {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

/// Queries the target on every auxiliary sample and fits a fresh model of
/// the same architecture to the returned posteriors. Only black-box
/// queries are used.
pub fn steal_model(handle: &TargetModelHandle, aux: &LabeledImageDataset, cfg: &TrainConfig) -> Result<StolenModel> {
    if aux.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.loss != LossKind::MseOnPosteriors {
        return Err(Error::Config("model stealing trains with mse_on_posteriors".into()));
    }
    let bb = handle.as_black_box();
    let spec = ModelSpec {
        architecture: bb.architecture_id().to_string(),
        num_classes: bb.num_classes(),
        input_shape: bb.input_shape().to_vec(),
    };
    let x = aux.images();
    let responses = bb.query(&x)?;
    let mut model = Model::init(&spec, cfg.seed)?;
    let loss_history = fit(&mut model, &x, Targets::Posteriors(&responses), cfg)?;
    let mut provenance = BTreeMap::new();
    provenance.insert("query_set_sha256".into(), tensor_hash(&x));
    provenance.insert("target_architecture".into(), spec.architecture.clone());
    Ok(StolenModel {
        model,
        loss_history,
        provenance,
    })
}

/// Fraction of samples on which stolen and target top-1 predictions agree
/// (ties break to the lowest class index on both sides).
pub fn agreement(stolen: &Model, handle: &TargetModelHandle, x: &Tensor) -> Result<f64> {
    agreement_rate(&stolen.predict(x)?, &handle.predict(x)?)
}
