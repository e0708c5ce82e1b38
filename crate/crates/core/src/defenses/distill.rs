// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::data::LabeledImageDataset;
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::zoo::{check_dataset, fit, LossKind, Model, ModelSpec, Targets, TrainConfig, Trained, SIMPLE_CNN_SMALL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub temperature: f32,
    /// Weight of the softened teacher term; `1 - alpha` goes to the hard labels.
    pub alpha: f32,
    pub student_architecture: String,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            temperature: 20.0,
            alpha: 0.7,
            student_architecture: SIMPLE_CNN_SMALL.to_string(),
        }
    }
}

impl DistillConfig {
    /// Default student recipe. The T^2-weighted soft term makes the standard
    /// recipe's 1e-2 start too hot for large temperatures.
    pub fn student_recipe() -> TrainConfig {
        TrainConfig::constant(OptimizerKind::SgdMomentum, 1e-3, 300, LossKind::Distill)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("invalid distillation config {self:?}")));
        }
        Ok(())
    }
}

/// Trains a student on the teacher's softened logits plus hard labels.
pub fn train_distilled(
    teacher: &Model,
    student_spec: &ModelSpec,
    train: &LabeledImageDataset,
    test: &LabeledImageDataset,
    cfg: &TrainConfig,
    dcfg: &DistillConfig,
) -> Result<Trained> {
    dcfg.validate()?;
    if cfg.loss != LossKind::Distill {
        return Err(Error::Config("distillation trains with the distill loss".into()));
    }
    if teacher.num_classes() != student_spec.num_classes
        || teacher.spec().input_shape != student_spec.input_shape
    {
        return Err(Error::ShapeMismatch("teacher and student disagree on classes or input".into()));
    }
    check_dataset(student_spec, train)?;
    let x = train.images();
    let teacher_logits = teacher.logits(&x)?;
    let mut model = Model::init(student_spec, cfg.seed)?;
    let loss_history = fit(
        &mut model,
        &x,
        Targets::Distill {
            labels: train.labels(),
            teacher_logits: &teacher_logits,
            temperature: dcfg.temperature,
            alpha: dcfg.alpha,
        },
        cfg,
    )?;
    let train_acc = model.accuracy(&x, train.labels())?;
    let test_acc = model.accuracy(&test.images(), test.labels())?;
    Ok(Trained {
        model,
        train_acc,
        test_acc,
        loss_history,
    })
}
