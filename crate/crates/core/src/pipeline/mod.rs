// SPDX-License-Identifier: Apache-2.0

//! Run configuration and the end-to-end assessment orchestrator.

pub mod cache;
pub mod config;
pub mod run;

pub use config::{derive_seed, AttackPair, DefenseConfig, RunConfig};
pub use run::{rebuild_report, run_assessment, Assessment, RepeatRecords};
