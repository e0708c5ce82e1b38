// SPDX-License-Identifier: Apache-2.0

//! Attribute inference: predict a sensitive attribute from the target's
//! embedding of a sample.

use super::mlp::{check_labels, AttackTrainConfig, FusionClassifier};
use crate::access::TargetModelHandle;
use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, macro_f1};
use crate::nn::Tensor;

pub const HIDDEN_WIDTH: usize = 64;

/// Flattened activations of the target's embedding layer (or `layer`).
pub fn extract_embeddings(handle: &TargetModelHandle, x: &Tensor, layer: Option<&str>) -> Result<Tensor> {
    handle.embedding(x, layer)
}

#[derive(Clone, Debug)]
pub struct AttributeAttack {
    pub model: FusionClassifier,
    pub num_values: usize,
    pub loss_history: Vec<f64>,
}

/// Trains a two-layer MLP from embeddings to attribute values `0..num_values`.
pub fn train_attrinf(
    embeddings: &Tensor,
    attribute: &[usize],
    num_values: usize,
    cfg: &AttackTrainConfig,
    seed: u64,
) -> Result<AttributeAttack> {
    if embeddings.batch() != attribute.len() {
        return Err(Error::ShapeMismatch("embeddings and attribute labels differ in length".into()));
    }
    check_labels(attribute, num_values)?;
    let mut model = FusionClassifier::plain(embeddings.sample_len(), &[HIDDEN_WIDTH, num_values], seed)?;
    let loss_history = model.train(embeddings, attribute, cfg, seed ^ 0xa7_7e)?;
    Ok(AttributeAttack {
        model,
        num_values,
        loss_history,
    })
}

/// Posterior over attribute values and the argmax prediction per sample.
pub fn infer_attributes(
    attack: &AttributeAttack,
    handle: &TargetModelHandle,
    x: &Tensor,
) -> Result<(Tensor, Vec<usize>)> {
    let emb = extract_embeddings(handle, x, None)?;
    let p = attack.model.posteriors(&emb)?;
    let pred = p.rows().map(crate::zoo::argmax).collect();
    Ok((p, pred))
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AttributeEvaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n: usize,
}

pub fn evaluate(
    attack: &AttributeAttack,
    handle: &TargetModelHandle,
    x: &Tensor,
    attribute: &[usize],
) -> Result<AttributeEvaluation> {
    let (_, pred) = infer_attributes(attack, handle, x)?;
    Ok(AttributeEvaluation {
        accuracy: accuracy(&pred, attribute)?,
        macro_f1: macro_f1(&pred, attribute, attack.num_values)?,
        n: pred.len(),
    })
}
