// SPDX-License-Identifier: Apache-2.0

//! Membership inference: a binary attack classifier over features derived
//! from the target's outputs (and, with white-box access, its loss and
//! last-layer gradient).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{AttackTrainConfig, FusionClassifier};
use crate::access::{rank_posteriors, Access, TargetModelHandle};
use crate::data::LabeledImageDataset;
use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, auc, f1_binary, roc_curve, RocPoint};
use crate::nn::Tensor;

/// Hidden width of every per-input encoder.
pub const ENCODER_WIDTH: usize = 64;
/// Fusion MLP widths; the last layer scores non-member / member.
pub const FUSION_WIDTHS: [usize; 4] = [256, 128, 64, 2];
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    BlackBox,
    WhiteBox,
}

impl FeatureMode {
    pub fn for_access(access: Access) -> Self {
        match access {
            Access::BlackBox => FeatureMode::BlackBox,
            Access::WhiteBox => FeatureMode::WhiteBox,
        }
    }
}

/// Attack inputs for a set of samples: concatenated feature blocks and,
/// when known, membership labels (1 = member).
#[derive(Clone, Debug)]
pub struct MembershipFeatures {
    pub mode: FeatureMode,
    pub features: Tensor,
    pub widths: Vec<usize>,
    pub membership: Vec<usize>,
}

fn one_hot(values: &[usize], width: usize) -> Tensor {
    let mut t = Tensor::zeros(vec![values.len(), width]);
    for (i, &v) in values.iter().enumerate() {
        t.sample_mut(i)[v] = 1.0;
    }
    t
}

/// Feature blocks for `x` with true labels `labels`.
///
/// Black-box: ranked posterior, and a one-hot pair saying whether the
/// top-1 prediction is correct. White-box: ranked posterior, per-sample
/// loss, last-layer gradient and one-hot label.
pub fn extract_features(
    handle: &TargetModelHandle,
    x: &Tensor,
    labels: &[usize],
    mode: FeatureMode,
) -> Result<(Tensor, Vec<usize>)> {
    if x.batch() != labels.len() {
        return Err(Error::ShapeMismatch("samples and labels differ in length".into()));
    }
    if mode == FeatureMode::WhiteBox && handle.access() != Access::WhiteBox {
        return Err(Error::Capability {
            op: "white-box membership features",
        });
    }
    let k = handle.num_classes();
    let post = handle.query(x)?;
    let ranked = rank_posteriors(&post);
    match mode {
        FeatureMode::BlackBox => {
            let correct: Vec<usize> = post
                .rows()
                .zip(labels)
                .map(|(p, &y)| usize::from(crate::zoo::argmax(p) == y))
                .collect();
            let ind = one_hot(&correct, 2);
            Ok((Tensor::concat_features(&[&ranked, &ind])?, vec![k, 2]))
        }
        FeatureMode::WhiteBox => {
            let loss = handle.loss(x, labels)?;
            let loss = Tensor::new(vec![loss.len(), 1], loss.iter().map(|&v| v as f32).collect())?;
            let grad = handle.last_layer_gradient(x, labels)?;
            let lab = one_hot(labels, k);
            let widths = vec![k, 1, grad.sample_len(), k];
            Ok((Tensor::concat_features(&[&ranked, &loss, &grad, &lab])?, widths))
        }
    }
}

fn draw(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Labelled features for `members` and `non_members`, downsampling the
/// larger side so both classes are equally represented.
pub fn balanced_features(
    handle: &TargetModelHandle,
    members: &LabeledImageDataset,
    non_members: &LabeledImageDataset,
    mode: FeatureMode,
    seed: u64,
) -> Result<MembershipFeatures> {
    let n = members.len().min(non_members.len());
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = members.subset(&draw(members.len(), n, &mut rng));
    let o = non_members.subset(&draw(non_members.len(), n, &mut rng));
    let (fm, widths) = extract_features(handle, &m.images(), m.labels(), mode)?;
    let (fo, _) = extract_features(handle, &o.images(), o.labels(), mode)?;
    let mut membership = vec![1; n];
    membership.extend(std::iter::repeat_n(0, n));
    Ok(MembershipFeatures {
        mode,
        features: Tensor::new(
            vec![2 * n, fm.sample_len()],
            fm.data().iter().chain(fo.data()).copied().collect(),
        )?,
        widths,
        membership,
    })
}

/// Attack training set from a shadow model: shadow_train rows are members,
/// shadow_test rows are not.
pub fn trainset_from_shadow(
    shadow: &TargetModelHandle,
    shadow_train: &LabeledImageDataset,
    shadow_test: &LabeledImageDataset,
    mode: FeatureMode,
    seed: u64,
) -> Result<MembershipFeatures> {
    balanced_features(shadow, shadow_train, shadow_test, mode, seed)
}

/// Halves of the target test set: the first trains the attack (as
/// non-members next to the known partial training data), the second is kept
/// for evaluation. Positions are into `target_test`.
pub fn split_nonmember_pool(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut a = idx[..n / 2].to_vec();
    let mut b = idx[n / 2..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Attack training set from partial knowledge of the target's training
/// data, queried on the target itself.
pub fn trainset_from_partial(
    target: &TargetModelHandle,
    partial_train: &LabeledImageDataset,
    non_member_pool: &LabeledImageDataset,
    mode: FeatureMode,
    seed: u64,
) -> Result<MembershipFeatures> {
    let overlap = partial_train
        .ids()
        .iter()
        .any(|id| non_member_pool.ids().contains(id));
    if overlap {
        return Err(Error::ShapeMismatch(
            "non-member pool overlaps the member samples".into(),
        ));
    }
    balanced_features(target, partial_train, non_member_pool, mode, seed)
}

/// Trained membership classifier.
#[derive(Clone, Debug)]
pub struct MembershipAttack {
    pub mode: FeatureMode,
    pub model: FusionClassifier,
    pub loss_history: Vec<f64>,
}

pub fn train_attack(
    trainset: &MembershipFeatures,
    cfg: &AttackTrainConfig,
    seed: u64,
) -> Result<MembershipAttack> {
    let mut model = FusionClassifier::new(&trainset.widths, &[ENCODER_WIDTH, ENCODER_WIDTH], &FUSION_WIDTHS, seed)?;
    let loss_history = model.train(&trainset.features, &trainset.membership, cfg, seed ^ 0x00a7_7ac4)?;
    Ok(MembershipAttack {
        mode: trainset.mode,
        model,
        loss_history,
    })
}

/// Member probability for each sample.
pub fn infer_membership(
    attack: &MembershipAttack,
    handle: &TargetModelHandle,
    x: &Tensor,
    labels: &[usize],
) -> Result<Vec<f64>> {
    if attack.mode == FeatureMode::WhiteBox && handle.access() != Access::WhiteBox {
        return Err(Error::Capability {
            op: "white-box membership inference",
        });
    }
    let (f, _) = extract_features(handle, x, labels, attack.mode)?;
    score(attack, &f)
}

fn score(attack: &MembershipAttack, features: &Tensor) -> Result<Vec<f64>> {
    let p = attack.model.posteriors(features)?;
    Ok(p.rows().map(|r| r[1] as f64).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MembershipEvaluation {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
    pub n: usize,
}

/// Scores a labelled, balanced evaluation set.
pub fn evaluate(attack: &MembershipAttack, evalset: &MembershipFeatures) -> Result<MembershipEvaluation> {
    if attack.mode != evalset.mode {
        return Err(Error::Capability {
            op: "membership evaluation with mismatched feature mode",
        });
    }
    let scores = score(attack, &evalset.features)?;
    let pred: Vec<usize> = scores.iter().map(|&s| usize::from(s >= DECISION_THRESHOLD)).collect();
    Ok(MembershipEvaluation {
        accuracy: accuracy(&pred, &evalset.membership)?,
        f1: f1_binary(&pred, &evalset.membership)?,
        auc: auc(&scores, &evalset.membership)?,
        roc: roc_curve(&scores, &evalset.membership)?,
        n: scores.len(),
    })
}
