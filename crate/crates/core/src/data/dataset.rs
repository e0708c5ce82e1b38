// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IMAGE_SIDE: usize = 32;

/// Per-channel affine normalisation `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Maps a normalised image back to raw pixel space.
    pub fn denormalize(&self, image: &[f32]) -> Vec<f32> {
        let plane = image.len() / self.mean.len().max(1);
        image
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i / plane;
                v * self.std[c] + self.mean[c]
            })
            .collect()
    }
}

/// Labelled 32x32 images plus optional named per-sample attributes.
///
/// `ids` carry sample identity through subsetting so splits can be audited
/// against the original dataset.
#[derive(Clone, Debug)]
pub struct LabeledImageDataset {
    name: String,
    channels: usize,
    num_classes: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
    ids: Vec<usize>,
    attributes: BTreeMap<String, Vec<usize>>,
    normalization: Normalization,
}

impl LabeledImageDataset {
    pub fn new(
        name: impl Into<String>,
        channels: usize,
        num_classes: usize,
        images: Vec<f32>,
        labels: Vec<usize>,
        attributes: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let n = labels.len();
        let per = channels * IMAGE_SIDE * IMAGE_SIDE;
        if channels == 0 || images.len() != n * per {
            return Err(Error::ShapeMismatch(format!(
                "{} image values for {} samples of shape {}x{}x{}",
                images.len(),
                n,
                channels,
                IMAGE_SIDE,
                IMAGE_SIDE
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::ShapeMismatch(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        for (attr, values) in &attributes {
            if values.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "attribute `{attr}` has {} values for {n} samples",
                    values.len()
                )));
            }
        }
        Ok(LabeledImageDataset {
            name: name.into(),
            channels,
            num_classes,
            images,
            labels,
            ids: (0..n).collect(),
            attributes,
            normalization: Normalization::identity(channels),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        [self.channels, IMAGE_SIDE, IMAGE_SIDE]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let per = self.channels * IMAGE_SIDE * IMAGE_SIDE;
        &self.images[i * per..(i + 1) * per]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.keys().cloned().collect()
    }

    pub fn attribute(&self, name: &str) -> Option<&[usize]> {
        self.attributes.get(name).map(Vec::as_slice)
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// All images as one batch tensor.
    pub fn images(&self) -> Tensor {
        let mut shape = vec![self.len()];
        shape.extend_from_slice(&self.sample_shape());
        Tensor::new(shape, self.images.clone()).expect("validated at construction")
    }

    /// Images at the given positions as a batch tensor.
    pub fn batch(&self, positions: &[usize]) -> Tensor {
        Tensor::stack(&self.sample_shape(), positions.iter().map(|&i| self.image(i)))
            .expect("validated at construction")
    }

    /// Sub-dataset at the given positions; ids are preserved.
    pub fn subset(&self, positions: &[usize]) -> LabeledImageDataset {
        let mut images = Vec::with_capacity(positions.len() * self.image(0).len().max(1));
        for &i in positions {
            images.extend_from_slice(self.image(i));
        }
        LabeledImageDataset {
            name: self.name.clone(),
            channels: self.channels,
            num_classes: self.num_classes,
            images,
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            ids: positions.iter().map(|&i| self.ids[i]).collect(),
            attributes: self
                .attributes
                .iter()
                .map(|(k, v)| (k.clone(), positions.iter().map(|&i| v[i]).collect()))
                .collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// Concatenates two datasets from the same source.
    pub fn concat(&self, other: &LabeledImageDataset) -> Result<LabeledImageDataset> {
        if self.channels != other.channels || self.num_classes != other.num_classes {
            return Err(Error::ShapeMismatch("datasets differ in shape".into()));
        }
        let mut out = self.clone();
        out.images.extend_from_slice(&other.images);
        out.labels.extend_from_slice(&other.labels);
        out.ids.extend_from_slice(&other.ids);
        for (k, v) in out.attributes.iter_mut() {
            let theirs = other
                .attributes
                .get(k)
                .ok_or_else(|| Error::ShapeMismatch(format!("attribute `{k}` missing")))?;
            v.extend_from_slice(theirs);
        }
        Ok(out)
    }

    /// Standardises each channel to zero mean and unit variance, recording the constants.
    pub fn normalize(&mut self) {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        let n = self.len();
        let mut mean = vec![0.0f32; self.channels];
        let mut std = vec![1.0f32; self.channels];
        for c in 0..self.channels {
            let values = (0..n).flat_map(|i| {
                let img = self.image(i);
                img[c * plane..(c + 1) * plane].iter().copied()
            });
            let (mut sum, mut sq, mut count) = (0.0f64, 0.0f64, 0usize);
            for v in values {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
                count += 1;
            }
            if count == 0 {
                continue;
            }
            let m = sum / count as f64;
            let var = (sq / count as f64 - m * m).max(0.0);
            mean[c] = m as f32;
            std[c] = if var > 1e-12 { var.sqrt() as f32 } else { 1.0 };
        }
        let per = self.channels * plane;
        for (i, v) in self.images.iter_mut().enumerate() {
            let c = (i % per) / plane;
            *v = (*v - mean[c]) / std[c];
        }
        self.normalization = Normalization { mean, std };
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Hex SHA-256 over images, labels and attributes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update((self.channels as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for v in &self.images {
            h.update(v.to_le_bytes());
        }
        for (&y, &id) in self.labels.iter().zip(&self.ids) {
            h.update((y as u64).to_le_bytes());
            h.update((id as u64).to_le_bytes());
        }
        for (k, vs) in &self.attributes {
            h.update(k.as_bytes());
            for v in vs {
                h.update((*v as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> LabeledImageDataset {
        let images = (0..n * 1024).map(|v| (v % 7) as f32).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        LabeledImageDataset::new("tiny", 1, 2, images, labels, BTreeMap::new()).unwrap()
    }

    #[test]
    fn rejects_out_of_range_labels_and_misaligned_attributes() {
        let err = LabeledImageDataset::new("x", 1, 2, vec![0.0; 1024], vec![2], BTreeMap::new());
        assert!(err.is_err());
        let mut attrs = BTreeMap::new();
        attrs.insert("a".to_string(), vec![0, 1]);
        let err = LabeledImageDataset::new("x", 1, 2, vec![0.0; 1024], vec![0], attrs);
        assert!(err.is_err());
    }

    #[test]
    fn normalize_gives_zero_mean_unit_variance() {
        let mut ds = tiny(4);
        ds.normalize();
        let all = ds.images();
        let n = all.data().len() as f64;
        let mean: f64 = all.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = all.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-4);
        let back = ds.normalization().denormalize(ds.image(0));
        assert!((back[3] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn subset_preserves_identity() {
        let ds = tiny(6);
        let sub = ds.subset(&[4, 1]);
        assert_eq!(sub.ids(), &[4, 1]);
        assert_eq!(sub.labels(), &[0, 1]);
        assert_eq!(sub.image(0), ds.image(4));
    }
}
