// SPDX-License-Identifier: Apache-2.0

//! Dataset sources. Everything loads from local files or is generated; nothing
//! is fetched over the network.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{LabeledImageDataset, IMAGE_SIDE};
use super::synthetic::{self, SyntheticSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// IDX-format image/label pair (the MNIST / Fashion-MNIST layout).
    Idx {
        name: String,
        images: PathBuf,
        labels: PathBuf,
        num_classes: usize,
        #[serde(default)]
        limit: Option<usize>,
    },
}

impl DatasetSource {
    /// Loads and normalises the dataset.
    pub fn load(&self) -> Result<LabeledImageDataset> {
        match self {
            DatasetSource::Synthetic(spec) => synthetic::generate(spec),
            DatasetSource::Idx {
                name,
                images,
                labels,
                num_classes,
                limit,
            } => load_idx(name, images, labels, *num_classes, *limit),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            DatasetSource::Synthetic(_) => "synthetic",
            DatasetSource::Idx { name, .. } => name,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an unsigned-byte IDX file into (dims, payload).
pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(Error::Serde("not an unsigned-byte IDX file".into()));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Serde("truncated IDX header".into()));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| {
            let o = 4 + 4 * d;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let len: usize = dims.iter().product();
    if bytes.len() < header + len {
        return Err(Error::Serde("truncated IDX payload".into()));
    }
    Ok((dims, &bytes[header..header + len]))
}

/// Bilinear resize of one single-channel image to `IMAGE_SIDE x IMAGE_SIDE`.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
    let sy = h as f32 / IMAGE_SIDE as f32;
    let sx = w as f32 / IMAGE_SIDE as f32;
    for i in 0..IMAGE_SIDE {
        let fy = ((i as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f32;
        for j in 0..IMAGE_SIDE {
            let fx = ((j as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f32;
            let top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            let bottom = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            out[i * IMAGE_SIDE + j] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

fn load_idx(
    name: &str,
    images: &Path,
    labels: &Path,
    num_classes: usize,
    limit: Option<usize>,
) -> Result<LabeledImageDataset> {
    let image_bytes = read(images)?;
    let label_bytes = read(labels)?;
    let (dims, pixels) = parse_idx(&image_bytes)?;
    let (ldims, raw_labels) = parse_idx(&label_bytes)?;
    if dims.len() != 3 || ldims.len() != 1 || dims[0] != ldims[0] {
        return Err(Error::ShapeMismatch(format!(
            "IDX images {dims:?} do not match labels {ldims:?}"
        )));
    }
    let n = limit.map_or(dims[0], |l| l.min(dims[0]));
    let (h, w) = (dims[1], dims[2]);
    let mut data = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    for i in 0..n {
        let img: Vec<f32> = pixels[i * h * w..(i + 1) * h * w]
            .iter()
            .map(|&p| p as f32 / 255.0)
            .collect();
        data.extend(resize_bilinear(&img, h, w));
    }
    let labels = raw_labels[..n].iter().map(|&l| l as usize).collect();
    let mut ds = LabeledImageDataset::new(name, 1, num_classes, data, labels, BTreeMap::new())?;
    ds.normalize();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 8, dims.len() as u8];
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn loads_idx_pair_and_resizes_to_32() {
        let dir = tempfile::tempdir().unwrap();
        let pix: Vec<u8> = (0..2 * 28 * 28).map(|v| (v % 256) as u8).collect();
        std::fs::write(dir.path().join("img"), idx(&[2, 28, 28], &pix)).unwrap();
        std::fs::write(dir.path().join("lbl"), idx(&[2], &[3, 7])).unwrap();
        let src = DatasetSource::Idx {
            name: "fmnist".into(),
            images: dir.path().join("img"),
            labels: dir.path().join("lbl"),
            num_classes: 10,
            limit: None,
        };
        let ds = src.load().unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sample_shape(), [1, 32, 32]);
        assert_eq!(ds.labels(), &[3, 7]);
    }

    #[test]
    fn resize_preserves_constant_images() {
        let out = resize_bilinear(&vec![0.25; 28 * 28], 28, 28);
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_idx(&[1, 2, 3]).is_err());
        assert!(parse_idx(&idx(&[5], &[1, 2])).is_err());
    }
}
