// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::arch::{Architectures, ModelSpec};
use crate::error::{Error, Result};
use crate::nn::loss::softmax_rows;
use crate::nn::{Network, Tensor};

/// A classifier: architecture description plus trained parameters.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    network: Network,
    embedding_layer: String,
}

impl Model {
    /// Freshly initialised model.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Self::init_with(&Architectures::builtin(), spec, seed)
    }

    pub fn init_with(archs: &Architectures, spec: &ModelSpec, seed: u64) -> Result<Self> {
        let layout = archs.layout(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::new(spec.input_shape.clone(), layout.layers, &mut rng)?;
        Self::from_network(spec.clone(), network, layout.embedding_layer)
    }

    /// Wraps an existing network; it must end in `num_classes` logits.
    pub fn from_network(spec: ModelSpec, network: Network, embedding_layer: String) -> Result<Self> {
        if network.output_shape() != [spec.num_classes] {
            return Err(Error::ShapeMismatch(format!(
                "network outputs {:?}, spec expects {} classes",
                network.output_shape(),
                spec.num_classes
            )));
        }
        if network.layer_index(&embedding_layer).is_none() {
            return Err(Error::ShapeMismatch(format!(
                "embedding layer `{embedding_layer}` not found"
            )));
        }
        Ok(Model {
            spec,
            network,
            embedding_layer,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn architecture_id(&self) -> &str {
        &self.spec.architecture
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn embedding_layer(&self) -> &str {
        &self.embedding_layer
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.network.forward(x)
    }

    pub fn posteriors(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.rows().map(argmax).collect())
    }

    /// Fraction of samples classified correctly.
    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Hex SHA-256 over architecture and parameters.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.spec.architecture.as_bytes());
        h.update((self.spec.num_classes as u64).to_le_bytes());
        for p in self.network.params() {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::arch::SIMPLE_CNN;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn posteriors_are_distributions() {
        let m = Model::init(&ModelSpec::new(SIMPLE_CNN, 8, 3), 1).unwrap();
        let x = Tensor::new(vec![2, 3, 32, 32], (0..2 * 3072).map(|v| (v % 13) as f32 * 0.1).collect()).unwrap();
        let p = m.posteriors(&x).unwrap();
        assert_eq!(p.shape(), &[2, 8]);
        for row in p.rows() {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }
}
