// SPDX-License-Identifier: Apache-2.0

//! Run records, their aggregation into a risk report, and the report's
//! JSON / CSV renderings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::metrics::{mean_std, pearson};
use crate::access::{attacks_applicable, AttackKind, ThreatModel};
use crate::error::{Error, Result};

pub const REPORT_FORMAT: u32 = 1;

/// A float rendered with exactly six decimals (`null` when not finite).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Num {
    pub fn render(&self) -> String {
        if !self.0.is_finite() {
            return "null".into();
        }
        let s = format!("{:.6}", self.0);
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(self.render()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Num(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

/// One attack's metrics against one target in one repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub repeat: usize,
    pub attack: AttackKind,
    pub threat_model: ThreatModel,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub artifacts: Vec<String>,
}

/// Utility and provenance of one assessed target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRecord {
    pub repeat: usize,
    pub architecture: String,
    pub checkpoint_sha256: String,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Defense bookkeeping, e.g. spent epsilon or the teacher's accuracy.
    #[serde(default)]
    pub defense: BTreeMap<String, f64>,
}

impl TargetRecord {
    pub fn overfitting(&self) -> f64 {
        self.train_acc - self.test_acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Num,
    pub std: Num,
    pub n_runs: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MetricSummary {
            mean: Num(mean),
            std: Num(std),
            n_runs: values.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: AttackKind,
    pub threat_model: ThreatModel,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub repeat: usize,
    pub architecture: String,
    pub checkpoint_sha256: String,
    pub train_acc: Num,
    pub test_acc: Num,
    pub overfitting: Num,
    pub defense: BTreeMap<String, Num>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub threat_model: ThreatModel,
    pub attack_a: AttackKind,
    pub metric_a: String,
    pub attack_b: AttackKind,
    pub metric_b: String,
    pub n_points: usize,
    /// `null` when fewer than two points or either side has zero variance.
    pub pearson_r: Num,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub format: u32,
    /// Hashes of every input: config, dataset, split manifests, checkpoints.
    pub inputs: BTreeMap<String, String>,
    pub defense: String,
    pub targets: Vec<TargetSummary>,
    pub overfitting: MetricSummary,
    pub train_acc: MetricSummary,
    pub test_acc: MetricSummary,
    pub results: Vec<AttackResult>,
    pub correlations: Vec<Correlation>,
}

/// The metric used to compare attacks; inversion is scored by eval-classifier
/// accuracy when a GAN was used (shadow data) and by MSE otherwise.
pub fn primary_metric(attack: AttackKind, tm: ThreatModel) -> &'static str {
    match attack {
        AttackKind::MemInf | AttackKind::AttrInf => "accuracy",
        AttackKind::ModSteal => "agreement",
        AttackKind::ModInv => {
            if tm.auxiliary() == crate::access::Auxiliary::Shadow {
                "accuracy"
            } else {
                "mse"
            }
        }
    }
}

/// Every unordered pair of applicable attacks within each threat model.
pub fn correlation_pairs() -> Vec<(ThreatModel, AttackKind, AttackKind)> {
    let mut out = Vec::new();
    for tm in ThreatModel::ALL {
        let set: Vec<AttackKind> = attacks_applicable(tm).into_iter().collect();
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                out.push((tm, set[i], set[j]));
            }
        }
    }
    out
}

/// Aggregates run records over repeats and computes the per-threat-model
/// Pearson correlations between attack metrics across repeats.
pub fn build_report(
    inputs: BTreeMap<String, String>,
    defense: &str,
    targets: &[TargetRecord],
    runs: &[RunRecord],
) -> Result<RiskReport> {
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grouped: BTreeMap<(ThreatModel, AttackKind), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        grouped.entry((r.threat_model, r.attack)).or_default().push(r);
    }
    let mut results = Vec::new();
    for ((tm, attack), recs) in &grouped {
        let names: BTreeSet<&String> = recs.iter().flat_map(|r| r.metrics.keys()).collect();
        let metrics = names
            .into_iter()
            .map(|name| {
                let vals: Vec<f64> = recs.iter().filter_map(|r| r.metrics.get(name).copied()).collect();
                (name.clone(), MetricSummary::of(&vals))
            })
            .collect();
        let mut artifacts: Vec<String> = recs.iter().flat_map(|r| r.artifacts.iter().cloned()).collect();
        artifacts.sort();
        results.push(AttackResult {
            attack: *attack,
            threat_model: *tm,
            metrics,
            artifacts,
        });
    }

    let mut correlations = Vec::new();
    for (tm, a, b) in correlation_pairs() {
        let (ma, mb) = (primary_metric(a, tm), primary_metric(b, tm));
        let value = |k: AttackKind, m: &str, rep: usize| {
            runs.iter()
                .find(|r| r.threat_model == tm && r.attack == k && r.repeat == rep)
                .and_then(|r| r.metrics.get(m).copied())
        };
        let reps: BTreeSet<usize> = runs.iter().map(|r| r.repeat).collect();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for rep in reps {
            if let (Some(x), Some(y)) = (value(a, ma, rep), value(b, mb, rep)) {
                xs.push(x);
                ys.push(y);
            }
        }
        if xs.is_empty() {
            continue;
        }
        let r = match pearson(&xs, &ys) {
            Ok(r) => r,
            Err(Error::ZeroVariance) => f64::NAN,
            Err(e) => return Err(e),
        };
        correlations.push(Correlation {
            threat_model: tm,
            attack_a: a,
            metric_a: ma.into(),
            attack_b: b,
            metric_b: mb.into(),
            n_points: xs.len(),
            pearson_r: Num(r),
        });
    }

    let col = |f: &dyn Fn(&TargetRecord) -> f64| MetricSummary::of(&targets.iter().map(f).collect::<Vec<_>>());
    Ok(RiskReport {
        format: REPORT_FORMAT,
        inputs,
        defense: defense.to_string(),
        targets: targets
            .iter()
            .map(|t| TargetSummary {
                repeat: t.repeat,
                architecture: t.architecture.clone(),
                checkpoint_sha256: t.checkpoint_sha256.clone(),
                train_acc: Num(t.train_acc),
                test_acc: Num(t.test_acc),
                overfitting: Num(t.overfitting()),
                defense: t.defense.iter().map(|(k, v)| (k.clone(), Num(*v))).collect(),
            })
            .collect(),
        overfitting: col(&|t| t.overfitting()),
        train_acc: col(&|t| t.train_acc),
        test_acc: col(&|t| t.test_acc),
        results,
        correlations,
    })
}

impl RiskReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per (attack, threat model, metric).
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("attack,threat_model,metric,mean,std,n_runs\n");
        for r in &self.results {
            for (name, m) in &r.metrics {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.attack.id(),
                    r.threat_model.id(),
                    name,
                    csv_num(m.mean),
                    csv_num(m.std),
                    m.n_runs
                );
            }
        }
        out
    }

    pub fn correlations_csv(&self) -> String {
        let mut out = String::from("threat_model,attack_a,metric_a,attack_b,metric_b,n_points,pearson_r\n");
        for c in &self.correlations {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.threat_model.id(),
                c.attack_a.id(),
                c.metric_a,
                c.attack_b.id(),
                c.metric_b,
                c.n_points,
                csv_num(c.pearson_r)
            );
        }
        out
    }
}

fn csv_num(n: Num) -> String {
    if n.0.is_finite() {
        n.render()
    } else {
        String::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_decimals() {
        assert_eq!(Num(0.5).render(), "0.500000");
        assert_eq!(Num(1.0 / 3.0).render(), "0.333333");
        assert_eq!(Num(-1e-9).render(), "0.000000");
        assert_eq!(Num(f64::NAN).render(), "null");
        assert_eq!(serde_json::to_string(&vec![Num(2.0)]).unwrap(), "[2.000000]");
    }

    #[test]
    fn six_pairs() {
        assert_eq!(correlation_pairs().len(), 6);
    }
}
