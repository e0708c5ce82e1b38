// SPDX-License-Identifier: Apache-2.0

//! Datasets, the four-way split and the partial-knowledge subset.

mod dataset;
mod registry;
mod split;
pub mod synthetic;

pub use dataset::{LabeledImageDataset, Normalization, IMAGE_SIDE};
pub use registry::{parse_idx, resize_bilinear, DatasetSource};
pub use split::{
    apply_split, partial_subset, quad_split, quad_split_indices, DatasetManifest, QuadSplit,
    SplitIndices,
};
pub use synthetic::{make_synthetic_dataset, SyntheticSpec};

/// Fraction of target_train known to a partial-knowledge adversary.
pub const PARTIAL_FRACTION: f64 = 0.7;
