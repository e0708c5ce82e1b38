// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OptimizerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    MseOnPosteriors,
    Distill,
}

/// One step of a piecewise-constant learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStep {
    pub from_epoch: usize,
    pub lr: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr_schedule: Vec<LrStep>,
    pub weight_decay: f32,
    pub momentum: f32,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    /// Target-model recipe: 300 epochs, batch 64, SGD (momentum 0.9, weight
    /// decay 5e-4), lr 1e-2 / 1e-3 from epoch 50 / 1e-4 from epoch 100.
    pub fn standard_recipe() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 64,
            optimizer: OptimizerKind::SgdMomentum,
            lr_schedule: vec![
                LrStep { from_epoch: 0, lr: 1e-2 },
                LrStep { from_epoch: 50, lr: 1e-3 },
                LrStep { from_epoch: 100, lr: 1e-4 },
            ],
            weight_decay: 5e-4,
            momentum: 0.9,
            loss: LossKind::CrossEntropy,
            seed: 0,
        }
    }

    /// Constant learning rate, no weight decay.
    pub fn constant(optimizer: OptimizerKind, lr: f32, epochs: usize, loss: LossKind) -> Self {
        TrainConfig {
            epochs,
            batch_size: 64,
            optimizer,
            lr_schedule: vec![LrStep { from_epoch: 0, lr }],
            weight_decay: 0.0,
            momentum: 0.9,
            loss,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.lr_schedule.is_empty() || self.lr_schedule[0].from_epoch != 0 {
            return Err(Error::Config("lr_schedule must start at epoch 0".into()));
        }
        if self.lr_schedule.iter().any(|s| !(s.lr > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self
            .lr_schedule
            .windows(2)
            .any(|w| w[1].from_epoch <= w[0].from_epoch)
        {
            return Err(Error::Config(
                "lr_schedule thresholds must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate in force during `epoch`; each step covers `[from_epoch, next.from_epoch)`.
    pub fn lr_at(&self, epoch: usize) -> f32 {
        self.lr_schedule
            .iter()
            .take_while(|s| s.from_epoch <= epoch)
            .last()
            .map_or(self.lr_schedule[0].lr, |s| s.lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_recipe_echo() {
        let c = TrainConfig::standard_recipe();
        assert_eq!(c.epochs, 300);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.optimizer, OptimizerKind::SgdMomentum);
        assert_eq!(c.momentum, 0.9);
        assert_eq!(c.weight_decay, 5e-4);
        assert_eq!(c.loss, LossKind::CrossEntropy);
        c.validate().unwrap();
    }

    #[test]
    fn schedule_boundaries() {
        let c = TrainConfig::standard_recipe();
        assert_eq!(c.lr_at(0), 1e-2);
        assert_eq!(c.lr_at(49), 1e-2);
        assert_eq!(c.lr_at(50), 1e-3);
        assert_eq!(c.lr_at(99), 1e-3);
        assert_eq!(c.lr_at(100), 1e-4);
        assert_eq!(c.lr_at(299), 1e-4);
    }

    #[test]
    fn validation_errors() {
        let mut c = TrainConfig::standard_recipe();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::standard_recipe();
        c.lr_schedule[2].from_epoch = 50;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::standard_recipe();
        c.lr_schedule[1].lr = 0.0;
        assert!(c.validate().is_err());
    }
}
