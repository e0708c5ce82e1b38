// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::ModelSpec;
use super::config::{LossKind, TrainConfig};
use super::model::Model;
use crate::data::LabeledImageDataset;
use crate::error::{Error, Result};
use crate::nn::{loss, Adam, Optimizer, OptimizerKind, Sgd, Tensor};

/// Supervision signal for [`fit`].
pub enum Targets<'a> {
    Labels(&'a [usize]),
    /// Soft posteriors regressed with MSE after softmax.
    Posteriors(&'a Tensor),
    /// Teacher logits plus hard labels for distillation.
    Distill {
        labels: &'a [usize],
        teacher_logits: &'a Tensor,
        temperature: f32,
        alpha: f32,
    },
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Posteriors(t) => t.batch(),
            Targets::Distill { labels, .. } => labels.len(),
        }
    }

    fn loss_kind(&self) -> LossKind {
        match self {
            Targets::Labels(_) => LossKind::CrossEntropy,
            Targets::Posteriors(_) => LossKind::MseOnPosteriors,
            Targets::Distill { .. } => LossKind::Distill,
        }
    }

    fn batch_loss(&self, logits: &Tensor, idx: &[usize]) -> (f64, Tensor) {
        match self {
            Targets::Labels(labels) => {
                let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                loss::cross_entropy(logits, &y)
            }
            Targets::Posteriors(t) => loss::mse_on_posteriors(logits, &t.select(idx)),
            Targets::Distill {
                labels,
                teacher_logits,
                temperature,
                alpha,
            } => {
                let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                loss::distillation(logits, &teacher_logits.select(idx), &y, *temperature, *alpha)
            }
        }
    }
}

pub fn make_optimizer(cfg: &TrainConfig, len: usize) -> Optimizer {
    match cfg.optimizer {
        OptimizerKind::SgdMomentum => Optimizer::Sgd(Sgd::new(len, cfg.momentum, cfg.weight_decay)),
        OptimizerKind::Adam => Optimizer::Adam(Adam::new(len, cfg.weight_decay)),
    }
}

/// Mini-batch training of `model` in place. Returns the mean loss of each epoch.
pub fn fit(model: &mut Model, inputs: &Tensor, targets: Targets<'_>, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = inputs.batch();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs but {} targets",
            n,
            targets.len()
        )));
    }
    if cfg.loss != targets.loss_kind() {
        return Err(Error::Config(format!(
            "train config loss {:?} does not match supplied targets",
            cfg.loss
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_ba7c);
    let mut opt = make_optimizer(cfg, model.network().param_count());
    let mut grads = vec![0.0f32; model.network().param_count()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let x = inputs.select(idx);
            let net = model.network();
            let trace = net.forward_train(&x)?;
            let (l, g) = targets.batch_loss(trace.output(), idx);
            total += l * idx.len() as f64;
            grads.fill(0.0);
            net.backward(&trace, &g, Some(&mut grads))?;
            opt.step(model.network_mut().params_mut(), &grads, lr);
        }
        history.push(total / n as f64);
    }
    Ok(history)
}

/// Outcome of training a classifier.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub train_acc: f64,
    pub test_acc: f64,
    pub loss_history: Vec<f64>,
}

pub fn check_dataset(spec: &ModelSpec, ds: &LabeledImageDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.num_classes() != spec.num_classes || ds.sample_shape().as_slice() != spec.input_shape.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "dataset ({} classes, {:?}) does not match model ({} classes, {:?})",
            ds.num_classes(),
            ds.sample_shape(),
            spec.num_classes,
            spec.input_shape
        )));
    }
    Ok(())
}

/// Trains a fresh model of `spec` with cross-entropy and reports final accuracies.
pub fn train_classifier(
    spec: &ModelSpec,
    train: &LabeledImageDataset,
    test: &LabeledImageDataset,
    cfg: &TrainConfig,
) -> Result<Trained> {
    check_dataset(spec, train)?;
    if !test.is_empty() {
        check_dataset(spec, test)?;
    }
    let mut model = Model::init(spec, cfg.seed)?;
    let x = train.images();
    let loss_history = fit(&mut model, &x, Targets::Labels(train.labels()), cfg)?;
    let train_acc = model.accuracy(&x, train.labels())?;
    let test_acc = model.accuracy(&test.images(), test.labels())?;
    Ok(Trained {
        model,
        train_acc,
        test_acc,
        loss_history,
    })
}

/// Shadow model: same architecture and recipe as the target, trained on shadow data.
pub fn train_shadow(
    target_spec: &ModelSpec,
    shadow_train: &LabeledImageDataset,
    shadow_test: &LabeledImageDataset,
    cfg: &TrainConfig,
) -> Result<Trained> {
    train_classifier(target_spec, shadow_train, shadow_test, cfg)
}
