// SPDX-License-Identifier: Apache-2.0

//! Metrics, aggregation and report rendering.

pub mod metrics;
pub mod plot;
pub mod report;

pub use report::{build_report, AttackResult, MetricSummary, Num, RiskReport, RunRecord, TargetRecord};
