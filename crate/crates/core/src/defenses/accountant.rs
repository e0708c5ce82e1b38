// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// zCDP cost of one Gaussian step whose noise std is `sigma` times the L2 sensitivity.
pub fn rho_per_step(sigma: f64) -> f64 {
    if sigma <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * sigma * sigma)
    }
}

/// (epsilon, delta)-DP implied by rho-zCDP.
pub fn epsilon_from_rho(rho: f64, delta: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InfeasibleBudget(format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Smallest noise multiplier such that `steps` Gaussian steps stay within
/// (epsilon, delta). Bisection in log space to 1e-9 relative width.
pub fn zcdp_sigma_for_budget(epsilon: f64, delta: f64, steps: u64) -> Result<f64> {
    check_delta(delta)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InfeasibleBudget(format!("epsilon must be positive, got {epsilon}")));
    }
    if steps == 0 {
        return Err(Error::InfeasibleBudget("zero training steps".into()));
    }
    let eps_at = |s: f64| epsilon_from_rho(steps as f64 * rho_per_step(s), delta);
    let (mut lo, mut hi) = (1e-6f64, 1e15f64);
    if eps_at(hi) > epsilon {
        return Err(Error::InfeasibleBudget(format!("epsilon {epsilon} is unreachable")));
    }
    if eps_at(lo) <= epsilon {
        return Ok(lo);
    }
    while hi / lo > 1.0 + 1e-9 {
        let mid = (lo * hi).sqrt();
        if eps_at(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Noise multiplier of a single Gaussian-mechanism release.
pub fn gaussian_sigma_single(epsilon: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InfeasibleBudget(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: u64,
    pub sigma: f64,
    pub clip: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Digest of the noise vector drawn for this step.
    pub noise_digest: String,
}

/// Running zCDP total over the steps actually taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZcdpAccountant {
    delta: f64,
    rho: f64,
    entries: Vec<LedgerEntry>,
}

impl ZcdpAccountant {
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(ZcdpAccountant {
            delta,
            rho: 0.0,
            entries: Vec::new(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn steps(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn epsilon(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            epsilon_from_rho(self.rho, self.delta)
        }
    }

    /// Epsilon after one more step at `sigma`.
    pub fn epsilon_after(&self, sigma: f64) -> f64 {
        epsilon_from_rho(self.rho + rho_per_step(sigma), self.delta)
    }

    pub fn record(&mut self, sigma: f64, clip: f64, noise_digest: String) {
        self.rho += rho_per_step(sigma);
        let entry = LedgerEntry {
            step: self.entries.len() as u64 + 1,
            sigma,
            clip,
            rho: self.rho,
            epsilon: epsilon_from_rho(self.rho, self.delta),
            noise_digest,
        };
        self.entries.push(entry);
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_for_one_epsilon_over_thousand_steps() {
        let s = zcdp_sigma_for_budget(1.0, 1e-5, 1000).unwrap();
        assert!((s - 155.0).abs() / 155.0 < 0.01, "{s}");
    }

    #[test]
    fn single_release_sigma() {
        let s = gaussian_sigma_single(1.0, 1e-5).unwrap();
        assert!((s - (2.0f64 * 125000f64.ln()).sqrt()).abs() < 1e-12);
        assert!(gaussian_sigma_single(1.0, 1.25).is_err());
        assert!(gaussian_sigma_single(0.0, 1e-5).is_err());
    }

    #[test]
    fn accountant_is_additive_in_rho() {
        let mut a = ZcdpAccountant::new(1e-5).unwrap();
        a.record(2.0, 1.0, String::new());
        a.record(2.0, 1.0, String::new());
        assert!((a.rho() - 0.25).abs() < 1e-15);
        assert_eq!(a.steps(), 2);
        assert!(a.ledger()[1].epsilon > a.ledger()[0].epsilon);
    }
}
