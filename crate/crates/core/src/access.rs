// SPDX-License-Identifier: Apache-2.0

//! Threat-model taxonomy and the capability-gated view of a target model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, cross_entropy_per_sample, softmax};
use crate::nn::Tensor;
use crate::zoo::{argmax, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    BlackBox,
    WhiteBox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auxiliary {
    Partial,
    Shadow,
    None,
}

/// One of the five assessed (access, auxiliary data) cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ThreatModel {
    access: Access,
    auxiliary: Auxiliary,
}

/// Rejects the black-box / no-data cell.
pub fn make_threat_model(access: Access, auxiliary: Auxiliary) -> Result<ThreatModel> {
    if access == Access::BlackBox && auxiliary == Auxiliary::None {
        return Err(Error::IllegalThreatModel);
    }
    Ok(ThreatModel { access, auxiliary })
}

impl ThreatModel {
    pub const BB_PARTIAL: ThreatModel = ThreatModel {
        access: Access::BlackBox,
        auxiliary: Auxiliary::Partial,
    };
    pub const BB_SHADOW: ThreatModel = ThreatModel {
        access: Access::BlackBox,
        auxiliary: Auxiliary::Shadow,
    };
    pub const WB_PARTIAL: ThreatModel = ThreatModel {
        access: Access::WhiteBox,
        auxiliary: Auxiliary::Partial,
    };
    pub const WB_SHADOW: ThreatModel = ThreatModel {
        access: Access::WhiteBox,
        auxiliary: Auxiliary::Shadow,
    };
    pub const WB_NONE: ThreatModel = ThreatModel {
        access: Access::WhiteBox,
        auxiliary: Auxiliary::None,
    };

    pub const ALL: [ThreatModel; 5] = [
        Self::BB_PARTIAL,
        Self::BB_SHADOW,
        Self::WB_PARTIAL,
        Self::WB_SHADOW,
        Self::WB_NONE,
    ];

    pub fn access(&self) -> Access {
        self.access
    }

    pub fn auxiliary(&self) -> Auxiliary {
        self.auxiliary
    }

    /// Short identifier: `bb_partial`, `bb_shadow`, `wb_partial`, `wb_shadow`, `wb_none`.
    pub fn id(&self) -> &'static str {
        match (self.access, self.auxiliary) {
            (Access::BlackBox, Auxiliary::Partial) => "bb_partial",
            (Access::BlackBox, Auxiliary::Shadow) => "bb_shadow",
            (Access::BlackBox, Auxiliary::None) => unreachable!("unconstructible"),
            (Access::WhiteBox, Auxiliary::Partial) => "wb_partial",
            (Access::WhiteBox, Auxiliary::Shadow) => "wb_shadow",
            (Access::WhiteBox, Auxiliary::None) => "wb_none",
        }
    }

    /// Conventional notation, e.g. `<M^W, D^S>`.
    pub fn notation(&self) -> String {
        let m = match self.access {
            Access::BlackBox => "B",
            Access::WhiteBox => "W",
        };
        let d = match self.auxiliary {
            Auxiliary::Partial => "P",
            Auxiliary::Shadow => "S",
            Auxiliary::None => "N",
        };
        format!("<M^{m}, D^{d}>")
    }
}

impl fmt::Display for ThreatModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ThreatModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (access, auxiliary) = match s {
            "bb_partial" => (Access::BlackBox, Auxiliary::Partial),
            "bb_shadow" => (Access::BlackBox, Auxiliary::Shadow),
            "bb_none" => (Access::BlackBox, Auxiliary::None),
            "wb_partial" => (Access::WhiteBox, Auxiliary::Partial),
            "wb_shadow" => (Access::WhiteBox, Auxiliary::Shadow),
            "wb_none" => (Access::WhiteBox, Auxiliary::None),
            other => return Err(Error::Config(format!("unknown threat model `{other}`"))),
        };
        make_threat_model(access, auxiliary)
    }
}

impl TryFrom<String> for ThreatModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ThreatModel> for String {
    fn from(tm: ThreatModel) -> String {
        tm.id().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[serde(rename = "meminf")]
    MemInf,
    #[serde(rename = "modinv")]
    ModInv,
    #[serde(rename = "attrinf")]
    AttrInf,
    #[serde(rename = "modsteal")]
    ModSteal,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::MemInf,
        AttackKind::ModInv,
        AttackKind::AttrInf,
        AttackKind::ModSteal,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            AttackKind::MemInf => "meminf",
            AttackKind::ModInv => "modinv",
            AttackKind::AttrInf => "attrinf",
            AttackKind::ModSteal => "modsteal",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack `{s}`")))
    }
}

/// Attacks that can be mounted under `tm`.
pub fn attacks_applicable(tm: ThreatModel) -> BTreeSet<AttackKind> {
    use AttackKind::*;
    let list: &[AttackKind] = match (tm.access, tm.auxiliary) {
        (Access::BlackBox, Auxiliary::Partial) | (Access::BlackBox, Auxiliary::Shadow) => {
            &[MemInf, ModSteal]
        }
        (Access::WhiteBox, Auxiliary::Partial) => &[MemInf, AttrInf],
        (Access::WhiteBox, Auxiliary::Shadow) => &[MemInf, AttrInf, ModInv],
        (Access::WhiteBox, Auxiliary::None) => &[ModInv],
        (Access::BlackBox, Auxiliary::None) => &[],
    };
    list.iter().copied().collect()
}

/// Errors unless `attack` is mountable under `tm`.
pub fn check_applicable(attack: AttackKind, tm: ThreatModel) -> Result<()> {
    if attacks_applicable(tm).contains(&attack) {
        Ok(())
    } else {
        Err(Error::InapplicableAttack {
            attack: attack.to_string(),
            threat_model: tm.notation(),
        })
    }
}

/// A probability vector over classes.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorVector(Vec<f32>);

impl PosteriorVector {
    pub fn new(probs: Vec<f32>, num_classes: usize) -> Result<Self> {
        if probs.len() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "posterior of length {} for {} classes",
                probs.len(),
                num_classes
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::ShapeMismatch("posterior entry outside [0, 1]".into()));
        }
        let sum: f64 = probs.iter().map(|&p| p as f64).sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::ShapeMismatch(format!("posterior sums to {sum}")));
        }
        Ok(PosteriorVector(probs))
    }

    pub fn probs(&self) -> &[f32] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Entries sorted in non-increasing order.
    pub fn ranked(&self) -> Vec<f32> {
        let mut r = self.0.clone();
        r.sort_by(|a, b| b.total_cmp(a));
        r
    }
}

/// Uniform, capability-gated access to a target classifier.
///
/// Handles hold no mutable state; gradient accessors recompute everything per
/// call, so a handle can be shared freely across threads.
#[derive(Clone, Debug)]
pub struct TargetModelHandle {
    model: Arc<Model>,
    access: Access,
}

pub fn wrap_model(model: Model, access: Access) -> TargetModelHandle {
    TargetModelHandle {
        model: Arc::new(model),
        access,
    }
}

impl TargetModelHandle {
    pub fn from_shared(model: Arc<Model>, access: Access) -> Self {
        TargetModelHandle { model, access }
    }

    pub fn access(&self) -> Access {
        self.access
    }

    pub fn architecture_id(&self) -> &str {
        self.model.architecture_id()
    }

    pub fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.model.spec().input_shape
    }

    /// The same model with reduced access.
    pub fn as_black_box(&self) -> TargetModelHandle {
        TargetModelHandle {
            model: Arc::clone(&self.model),
            access: Access::BlackBox,
        }
    }

    fn require_white_box(&self, op: &'static str) -> Result<&Model> {
        match self.access {
            Access::WhiteBox => Ok(&self.model),
            Access::BlackBox => Err(Error::Capability { op }),
        }
    }

    /// Softmax posteriors for a batch, one row per sample.
    pub fn query(&self, x: &Tensor) -> Result<Tensor> {
        self.model.posteriors(x)
    }

    pub fn query_one(&self, sample: &[f32]) -> Result<PosteriorVector> {
        let x = Tensor::stack(self.input_shape(), [sample])?;
        let p = self.query(&x)?;
        PosteriorVector::new(p.sample(0).to_vec(), self.num_classes())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.query(x)?.rows().map(argmax).collect())
    }

    pub fn parameters(&self) -> Result<&[f32]> {
        Ok(self.require_white_box("parameters")?.network().params())
    }

    /// The underlying model; white-box only.
    pub fn model(&self) -> Result<&Model> {
        self.require_white_box("model")
    }

    /// Per-sample cross-entropy at the given labels.
    pub fn loss(&self, x: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
        let model = self.require_white_box("loss")?;
        Ok(cross_entropy_per_sample(&model.logits(x)?, labels))
    }

    /// Per-sample gradient of the cross-entropy w.r.t. the parameters of the
    /// last parametric layer, flattened (weights then bias). One row per sample.
    pub fn last_layer_gradient(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let model = self.require_white_box("last_layer_gradient")?;
        let net = model.network();
        let last = net
            .last_parametric_layer()
            .ok_or_else(|| Error::ShapeMismatch("model has no parameters".into()))?;
        let head = net.forward_prefix(x, last)?;
        let tail = net.tail(last);
        let width = tail.param_count();
        let mut out = Vec::with_capacity(x.batch() * width);
        let mut grads = vec![0.0f32; width];
        for (i, &y) in labels.iter().enumerate() {
            let xi = head.select(&[i]);
            let trace = tail.forward_train(&xi)?;
            let (_, g) = cross_entropy(trace.output(), &[y]);
            grads.fill(0.0);
            tail.backward(&trace, &g, Some(&mut grads))?;
            out.extend_from_slice(&grads);
        }
        Tensor::new(vec![labels.len(), width], out)
    }

    /// Activations of a named layer; `None` selects the model's embedding layer.
    pub fn embedding(&self, x: &Tensor, layer: Option<&str>) -> Result<Tensor> {
        let model = self.require_white_box("embedding")?;
        let name = layer.unwrap_or(model.embedding_layer());
        let h = model.network().forward_until(x, name)?;
        let width = h.sample_len();
        h.reshaped(&[width])
    }

    /// Cross-entropy at `classes` and its gradient w.r.t. the input batch.
    pub fn input_gradient(&self, x: &Tensor, classes: &[usize]) -> Result<(Vec<f64>, Tensor)> {
        let model = self.require_white_box("input_gradient")?;
        let net = model.network();
        let trace = net.forward_train(x)?;
        let losses = cross_entropy_per_sample(trace.output(), classes);
        // cross_entropy averages over the batch; undo that so each sample gets its own gradient
        let (_, mut g) = cross_entropy(trace.output(), classes);
        let n = x.batch() as f32;
        g.data_mut().iter_mut().for_each(|v| *v *= n);
        let dx = net.backward(&trace, &g, None)?;
        let shape = x.shape().to_vec();
        Ok((losses, Tensor::new(shape, dx.into_data())?))
    }
}

/// Ranked (non-increasing) copy of every row's posterior.
pub fn rank_posteriors(p: &Tensor) -> Tensor {
    let mut out = p.clone();
    for i in 0..out.batch() {
        out.sample_mut(i).sort_by(|a, b| b.total_cmp(a));
    }
    out
}

/// Posterior of a single sample.
pub fn posterior_of(logits: &[f32]) -> Vec<f32> {
    softmax(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{ModelSpec, SIMPLE_CNN_SMALL};

    fn handle(access: Access) -> TargetModelHandle {
        wrap_model(
            Model::init(&ModelSpec::new(SIMPLE_CNN_SMALL, 8, 1), 4).unwrap(),
            access,
        )
    }

    fn inputs(n: usize) -> Tensor {
        Tensor::new(
            vec![n, 1, 32, 32],
            (0..n * 1024).map(|v| ((v * 37 % 101) as f32 / 50.0) - 1.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn threat_model_cells() {
        let tm = make_threat_model(Access::WhiteBox, Auxiliary::Shadow).unwrap();
        assert_eq!(tm.notation(), "<M^W, D^S>");
        assert!(matches!(
            make_threat_model(Access::BlackBox, Auxiliary::None),
            Err(Error::IllegalThreatModel)
        ));
        let tm = make_threat_model(Access::BlackBox, Auxiliary::Partial).unwrap();
        assert_eq!(tm.notation(), "<M^B, D^P>");
        assert!("bb_none".parse::<ThreatModel>().is_err());
        let json = serde_json::to_string(&tm).unwrap();
        assert_eq!(json, "\"bb_partial\"");
        assert_eq!(serde_json::from_str::<ThreatModel>(&json).unwrap(), tm);
        assert!(serde_json::from_str::<ThreatModel>("\"bb_none\"").is_err());
    }

    #[test]
    fn black_box_handle_refuses_every_white_box_accessor() {
        let h = handle(Access::BlackBox);
        let x = inputs(2);
        assert!(matches!(h.parameters(), Err(Error::Capability { .. })));
        assert!(matches!(h.model(), Err(Error::Capability { .. })));
        assert!(matches!(h.loss(&x, &[0, 1]), Err(Error::Capability { .. })));
        assert!(matches!(h.last_layer_gradient(&x, &[0, 1]), Err(Error::Capability { .. })));
        assert!(matches!(h.embedding(&x, None), Err(Error::Capability { .. })));
        assert!(matches!(h.input_gradient(&x, &[0, 1]), Err(Error::Capability { .. })));
        assert_eq!(h.query(&x).unwrap().shape(), &[2, 8]);
    }

    #[test]
    fn query_yields_valid_posterior_of_num_classes() {
        let h = handle(Access::BlackBox);
        let x = inputs(1);
        let p = h.query_one(x.sample(0)).unwrap();
        assert_eq!(p.probs().len(), 8);
    }

    #[test]
    fn loss_matches_independent_cross_entropy_of_query() {
        let h = handle(Access::WhiteBox);
        let x = inputs(3);
        let labels = [1, 5, 7];
        let losses = h.loss(&x, &labels).unwrap();
        let p = h.query(&x).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            let independent = -(p.sample(i)[y] as f64).ln();
            assert!(losses[i] >= 0.0);
            assert!((losses[i] - independent).abs() < 1e-5);
        }
    }

    #[test]
    fn last_layer_gradient_matches_full_backward() {
        let h = handle(Access::WhiteBox);
        let x = inputs(2);
        let g = h.last_layer_gradient(&x, &[3, 4]).unwrap();
        let model = h.model().unwrap();
        let net = model.network();
        let last = net.last_parametric_layer().unwrap();
        let range = net.param_range(last);
        assert_eq!(g.sample_len(), range.len());
        for (i, y) in [3usize, 4].into_iter().enumerate() {
            let xi = x.select(&[i]);
            let trace = net.forward_train(&xi).unwrap();
            let (_, gl) = cross_entropy(trace.output(), &[y]);
            let mut full = vec![0.0; net.param_count()];
            net.backward(&trace, &gl, Some(&mut full)).unwrap();
            for (a, b) in full[range.clone()].iter().zip(g.sample(i)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ranked_posterior_is_sorted_permutation() {
        let p = PosteriorVector::new(vec![0.1, 0.6, 0.3], 3).unwrap();
        assert_eq!(p.ranked(), vec![0.6, 0.3, 0.1]);
        assert!(PosteriorVector::new(vec![0.5, 0.6], 2).is_err());
        assert!(PosteriorVector::new(vec![1.0], 2).is_err());
    }
}
