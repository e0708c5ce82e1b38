// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::accountant::{zcdp_sigma_for_budget, ZcdpAccountant};
use crate::data::LabeledImageDataset;
use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy;
use crate::zoo::{check_dataset, make_optimizer, LossKind, Model, ModelSpec, TrainConfig, Trained};

/// Scales `g` so its L2 norm is at most `clip`.
pub fn clip_gradient(g: &[f32], clip: f32) -> Vec<f32> {
    let norm = g.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    let factor = (norm / clip as f64).max(1.0);
    g.iter().map(|v| (*v as f64 / factor) as f32).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSgdConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub clip: f32,
    /// Noise multiplier; derived from the budget and step count when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip must be positive, got {}", self.clip)));
        }
        if !(self.epsilon > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InfeasibleBudget(format!(
                "epsilon {} / delta {} out of range",
                self.epsilon, self.delta
            )));
        }
        if matches!(self.sigma, Some(s) if s < 0.0 || !s.is_finite()) {
            return Err(Error::Config("sigma must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpentBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub clip: f64,
    pub steps: u64,
    pub planned_steps: u64,
    /// Training stopped early because the next step would exceed the budget.
    pub exhausted: bool,
}

#[derive(Clone, Debug)]
pub struct DpTrained {
    pub trained: Trained,
    pub spent: SpentBudget,
    pub accountant: ZcdpAccountant,
}

fn digest(v: &[f32]) -> String {
    let mut h = Sha256::new();
    for x in v {
        h.update(x.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// DP-SGD: per-sample gradients clipped to `clip`, summed, perturbed with
/// fresh N(0, (clip * sigma)^2) noise, averaged over the batch.
///
/// Batches come from a per-epoch shuffle. If the next step would take the
/// accounted epsilon past the budget, training stops and the model trained
/// so far is returned with `exhausted` set. An explicit `sigma` of zero
/// trains with clipping only and reports an infinite epsilon.
pub fn train_dpsgd(
    spec: &ModelSpec,
    train: &LabeledImageDataset,
    test: &LabeledImageDataset,
    cfg: &TrainConfig,
    dp: &DpSgdConfig,
) -> Result<DpTrained> {
    cfg.validate()?;
    dp.validate()?;
    if cfg.loss != LossKind::CrossEntropy {
        return Err(Error::Config("DP-SGD trains with cross_entropy".into()));
    }
    check_dataset(spec, train)?;
    let n = train.len();
    let planned = (cfg.epochs * n.div_ceil(cfg.batch_size)) as u64;
    let sigma = match dp.sigma {
        Some(s) => s,
        None => zcdp_sigma_for_budget(dp.epsilon, dp.delta, planned)?,
    };
    let mut accountant = ZcdpAccountant::new(dp.delta)?;
    let mut model = Model::init(spec, cfg.seed)?;
    let x = train.images();
    let labels = train.labels();
    let plen = model.network().param_count();
    let mut opt = make_optimizer(cfg, plen);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_ba7c);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd9_5e_ed);
    let std = (dp.clip as f64 * sigma) as f32;
    let normal = if std > 0.0 { Some(Normal::new(0.0f32, std).expect("finite std")) } else { None };
    let mut order: Vec<usize> = (0..n).collect();
    let mut g = vec![0.0f32; plen];
    let mut sum = vec![0.0f32; plen];
    let mut noise = vec![0.0f32; plen];
    let mut history = Vec::new();
    let mut exhausted = false;
    'epochs: for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            if sigma > 0.0 && accountant.epsilon_after(sigma) > dp.epsilon {
                exhausted = true;
                if seen > 0 {
                    history.push(total / seen as f64);
                }
                break 'epochs;
            }
            sum.fill(0.0);
            for &i in idx {
                let net = model.network();
                let trace = net.forward_train(&x.select(&[i]))?;
                let (l, dl) = cross_entropy(trace.output(), &[labels[i]]);
                total += l;
                g.fill(0.0);
                net.backward(&trace, &dl, Some(&mut g))?;
                for (s, c) in sum.iter_mut().zip(clip_gradient(&g, dp.clip)) {
                    *s += c;
                }
            }
            seen += idx.len();
            match &normal {
                Some(dist) => noise.iter_mut().for_each(|v| *v = dist.sample(&mut noise_rng)),
                None => noise.fill(0.0),
            }
            let inv = 1.0 / idx.len() as f32;
            for ((s, z), out) in sum.iter().zip(&noise).zip(g.iter_mut()) {
                *out = (s + z) * inv;
            }
            opt.step(model.network_mut().params_mut(), &g, lr);
            accountant.record(sigma, dp.clip as f64, digest(&noise));
        }
        history.push(total / seen.max(1) as f64);
    }
    let train_acc = model.accuracy(&x, labels)?;
    let test_acc = if test.is_empty() {
        f64::NAN
    } else {
        model.accuracy(&test.images(), test.labels())?
    };
    let spent = SpentBudget {
        epsilon: accountant.epsilon(),
        delta: dp.delta,
        rho: accountant.rho(),
        sigma,
        clip: dp.clip as f64,
        steps: accountant.steps(),
        planned_steps: planned,
        exhausted,
    };
    Ok(DpTrained {
        trained: Trained {
            model,
            train_acc,
            test_acc,
            loss_history: history,
        },
        spent,
        accountant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping() {
        let g = clip_gradient(&[3.0, 4.0], 1.0);
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
        assert_eq!(clip_gradient(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        assert_eq!(clip_gradient(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }
}
