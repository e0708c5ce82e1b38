// SPDX-License-Identifier: Apache-2.0

//! The four inference attacks.

pub mod attrinf;
pub mod meminf;
pub mod mlp;
pub mod modinv;
pub mod modsteal;

pub use mlp::{AttackTrainConfig, FusionClassifier};
