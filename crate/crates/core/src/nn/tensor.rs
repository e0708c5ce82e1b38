// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};

/// Dense row-major batch of samples. `shape[0]` is the batch dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Stacks equally sized samples into a batch with per-sample shape `sample_shape`.
    pub fn stack<'a, I>(sample_shape: &[usize], samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let len: usize = sample_shape.iter().product();
        let mut data = Vec::new();
        let mut n = 0;
        for s in samples {
            if s.len() != len {
                return Err(Error::ShapeMismatch(format!(
                    "sample of length {} does not match {:?}",
                    s.len(),
                    sample_shape
                )));
            }
            data.extend_from_slice(s);
            n += 1;
        }
        let mut shape = vec![n];
        shape.extend_from_slice(sample_shape);
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.sample_len().max(1))
    }

    /// Same data viewed with a different per-sample shape.
    pub fn reshaped(mut self, sample_shape: &[usize]) -> Result<Self> {
        let len: usize = sample_shape.iter().product();
        if len != self.sample_len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot view {:?} as {:?}",
                self.sample_shape(),
                sample_shape
            )));
        }
        let n = self.batch();
        self.shape = std::iter::once(n).chain(sample_shape.iter().copied()).collect();
        Ok(self)
    }

    /// Selects a subset of samples by index.
    pub fn select(&self, indices: &[usize]) -> Tensor {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor { shape, data }
    }

    /// Concatenates per-sample feature vectors of several batches along the feature axis.
    pub fn concat_features(parts: &[&Tensor]) -> Result<Tensor> {
        let n = parts.first().map(|t| t.batch()).unwrap_or(0);
        if parts.iter().any(|t| t.batch() != n) {
            return Err(Error::ShapeMismatch("batch sizes differ".into()));
        }
        let width: usize = parts.iter().map(|t| t.sample_len()).sum();
        let mut data = Vec::with_capacity(n * width);
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(p.sample(i));
            }
        }
        Ok(Tensor {
            shape: vec![n, width],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_features`]: splits columns into blocks of the given widths.
    pub fn split_features(&self, widths: &[usize]) -> Vec<Tensor> {
        let n = self.batch();
        let mut out: Vec<Vec<f32>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
        for i in 0..n {
            let row = self.sample(i);
            let mut start = 0;
            for (k, &w) in widths.iter().enumerate() {
                out[k].extend_from_slice(&row[start..start + w]);
                start += w;
            }
        }
        out.into_iter()
            .zip(widths)
            .map(|(data, &w)| Tensor {
                shape: vec![n, w],
                data,
            })
            .collect()
    }
}
