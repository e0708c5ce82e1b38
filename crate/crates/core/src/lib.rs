// SPDX-License-Identifier: Apache-2.0

//! Privacy and security risk assessment for image classifiers.
//!
//! Four families of inference attacks (membership inference, model
//! inversion, attribute inference, model stealing) are mounted against a
//! target model under five threat-model cells. Two training-time defenses
//! (DP-SGD with a zCDP accountant, knowledge distillation) can be applied
//! first, and results are aggregated into a reproducible risk report.

pub mod access;
pub mod attacks;
pub mod data;
pub mod defenses;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod zoo;

pub use access::{
    attacks_applicable, make_threat_model, wrap_model, Access, AttackKind, Auxiliary,
    PosteriorVector, TargetModelHandle, ThreatModel,
};
pub use error::{Error, Result};
