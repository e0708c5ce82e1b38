// SPDX-License-Identifier: Apache-2.0

//! Classifier architectures, the training recipe and checkpoints.

mod arch;
pub mod checkpoint;
mod config;
mod model;
mod train;

pub use arch::{
    Architectures, Builder, Layout, ModelSpec, EMBEDDING_LAYER, LINEAR, MLP, SIMPLE_CNN,
    SIMPLE_CNN_SMALL,
};
pub use config::{LossKind, LrStep, TrainConfig};
pub use model::{argmax, Model};
pub use train::{check_dataset, fit, make_optimizer, train_classifier, train_shadow, Targets, Trained};
