// SPDX-License-Identifier: Apache-2.0

//! Training-time defenses: DP-SGD with a zCDP accountant, and knowledge
//! distillation.

mod accountant;
mod distill;
mod dpsgd;

pub use accountant::{
    epsilon_from_rho, gaussian_sigma_single, rho_per_step, zcdp_sigma_for_budget, LedgerEntry,
    ZcdpAccountant,
};
pub use distill::{train_distilled, DistillConfig};
pub use dpsgd::{clip_gradient, train_dpsgd, DpSgdConfig, DpTrained, SpentBudget};
