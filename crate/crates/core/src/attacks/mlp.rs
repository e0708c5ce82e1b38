// SPDX-License-Identifier: Apache-2.0

//! Attack classifiers: per-input encoder MLPs whose embeddings are
//! concatenated and fed to a fusion MLP.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, softmax_rows};
use crate::nn::{Adam, LayerKind, LayerSpec, Network, Tensor};
use crate::zoo::argmax;

/// Adam / cross-entropy training settings for attack models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackTrainConfig {
    pub batch_size: usize,
    pub lr: f32,
    pub epochs: usize,
}

impl AttackTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || !(self.lr > 0.0) {
            return Err(Error::Config(format!("invalid attack training config {self:?}")));
        }
        Ok(())
    }
}

fn mlp_layers(prefix: &str, input: usize, widths: &[usize], relu_last: bool) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut prev = input;
    for (i, &w) in widths.iter().enumerate() {
        layers.push(LayerSpec::new(
            format!("{prefix}fc{}", i + 1),
            LayerKind::Linear {
                inputs: prev,
                outputs: w,
            },
        ));
        if i + 1 < widths.len() || relu_last {
            layers.push(LayerSpec::new(format!("{prefix}relu{}", i + 1), LayerKind::Relu));
        }
        prev = w;
    }
    layers
}

#[derive(Clone, Debug)]
pub struct FusionClassifier {
    input_widths: Vec<usize>,
    encoders: Vec<Network>,
    fusion: Network,
    num_classes: usize,
}

impl FusionClassifier {
    /// One encoder per input block (each `encoder_widths` deep, ReLU after
    /// every layer), then a fusion MLP whose last width is the class count.
    pub fn new(
        input_widths: &[usize],
        encoder_widths: &[usize],
        fusion_widths: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoders = Vec::new();
        let mut fused = 0;
        for (k, &w) in input_widths.iter().enumerate() {
            let net = Network::new(
                vec![w],
                mlp_layers(&format!("enc{k}_"), w, encoder_widths, true),
                &mut rng,
            )?;
            fused += net.output_shape()[0];
            encoders.push(net);
        }
        let fusion = Network::new(vec![fused], mlp_layers("fuse_", fused, fusion_widths, false), &mut rng)?;
        Ok(FusionClassifier {
            input_widths: input_widths.to_vec(),
            encoders,
            fusion,
            num_classes: *fusion_widths.last().expect("at least one fusion layer"),
        })
    }

    /// Plain MLP on a single input (no encoders).
    pub fn plain(input_width: usize, widths: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fusion = Network::new(vec![input_width], mlp_layers("", input_width, widths, false), &mut rng)?;
        Ok(FusionClassifier {
            input_widths: vec![input_width],
            encoders: Vec::new(),
            fusion,
            num_classes: *widths.last().expect("at least one layer"),
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_widths.iter().sum()
    }

    pub fn input_widths(&self) -> &[usize] {
        &self.input_widths
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.sample_len() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "attack model takes {} features, got {}",
                self.input_width(),
                x.sample_len()
            )));
        }
        Ok(())
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        if self.encoders.is_empty() {
            return Ok(x.clone());
        }
        let blocks = x.split_features(&self.input_widths);
        let outs = self
            .encoders
            .iter()
            .zip(&blocks)
            .map(|(e, b)| e.forward(b))
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat_features(&outs.iter().collect::<Vec<_>>())
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        self.fusion.forward(&self.encode(x)?)
    }

    pub fn posteriors(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.rows().map(argmax).collect())
    }

    /// Mini-batch Adam on cross-entropy. Returns per-epoch mean loss.
    pub fn train(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        cfg: &AttackTrainConfig,
        seed: u64,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        self.check(x)?;
        if x.batch() != labels.len() {
            return Err(Error::ShapeMismatch("features and labels differ in length".into()));
        }
        check_labels(labels, self.num_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_opt: Vec<Adam> = self
            .encoders
            .iter()
            .map(|e| Adam::new(e.param_count(), 0.0))
            .collect();
        let mut fuse_opt = Adam::new(self.fusion.param_count(), 0.0);
        let mut enc_grads: Vec<Vec<f32>> = self
            .encoders
            .iter()
            .map(|e| vec![0.0; e.param_count()])
            .collect();
        let mut fuse_grads = vec![0.0; self.fusion.param_count()];
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(cfg.batch_size) {
                let xb = x.select(idx);
                let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let blocks = if self.encoders.is_empty() {
                    vec![xb]
                } else {
                    xb.split_features(&self.input_widths)
                };
                let enc_traces = self
                    .encoders
                    .iter()
                    .zip(&blocks)
                    .map(|(e, b)| e.forward_train(b))
                    .collect::<Result<Vec<_>>>()?;
                let fused = if self.encoders.is_empty() {
                    blocks[0].clone()
                } else {
                    Tensor::concat_features(&enc_traces.iter().map(|t| t.output()).collect::<Vec<_>>())?
                };
                let trace = self.fusion.forward_train(&fused)?;
                let (l, g) = cross_entropy(trace.output(), &yb);
                total += l * idx.len() as f64;
                fuse_grads.fill(0.0);
                let dfused = self.fusion.backward(&trace, &g, Some(&mut fuse_grads))?;
                if !self.encoders.is_empty() {
                    let widths: Vec<usize> = self.encoders.iter().map(|e| e.output_shape()[0]).collect();
                    for (k, dblock) in dfused.split_features(&widths).iter().enumerate() {
                        enc_grads[k].fill(0.0);
                        self.encoders[k].backward(&enc_traces[k], dblock, Some(&mut enc_grads[k]))?;
                    }
                    for k in 0..self.encoders.len() {
                        enc_opt[k].step(self.encoders[k].params_mut(), &enc_grads[k], cfg.lr);
                    }
                }
                fuse_opt.step(self.fusion.params_mut(), &fuse_grads, cfg.lr);
            }
            history.push(total / labels.len() as f64);
        }
        Ok(history)
    }
}

/// Errors unless at least two distinct labels, all below `num_classes`, are present.
pub fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::ShapeMismatch(format!("label {bad} out of range")));
    }
    let first = labels.first().copied();
    if labels.iter().all(|&y| Some(y) == first) {
        return Err(Error::DegenerateLabels(format!(
            "need at least two label values, got only {:?}",
            first
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_xor_of_two_inputs() {
        // Each block holds one bit; the class is their XOR, so the fusion must combine blocks.
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..64 {
            let (a, b) = (i % 2, (i / 2) % 2);
            data.extend_from_slice(&[a as f32, b as f32]);
            labels.push(a ^ b);
        }
        let x = Tensor::new(vec![64, 2], data).unwrap();
        let mut m = FusionClassifier::new(&[1, 1], &[16, 16], &[32, 16, 2], 3).unwrap();
        let cfg = AttackTrainConfig {
            batch_size: 16,
            lr: 1e-2,
            epochs: 200,
        };
        m.train(&x, &labels, &cfg, 1).unwrap();
        assert_eq!(m.predict(&x).unwrap(), labels);
    }

    #[test]
    fn single_label_value_is_degenerate() {
        let x = Tensor::zeros(vec![3, 2]);
        let mut m = FusionClassifier::plain(2, &[4, 2], 0).unwrap();
        let cfg = AttackTrainConfig {
            batch_size: 2,
            lr: 1e-3,
            epochs: 1,
        };
        assert!(matches!(
            m.train(&x, &[1, 1, 1], &cfg, 0),
            Err(Error::DegenerateLabels(_))
        ));
    }
}
