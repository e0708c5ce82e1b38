// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledImageDataset, Normalization};
use crate::error::{Error, Result};

/// The four disjoint partitions every assessment works from.
#[derive(Clone, Debug)]
pub struct QuadSplit {
    pub target_train: LabeledImageDataset,
    pub target_test: LabeledImageDataset,
    pub shadow_train: LabeledImageDataset,
    pub shadow_test: LabeledImageDataset,
    pub seed: u64,
}

/// Position lists (into the source dataset) for each of the four parts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub target_train: Vec<usize>,
    pub target_test: Vec<usize>,
    pub shadow_train: Vec<usize>,
    pub shadow_test: Vec<usize>,
}

impl SplitIndices {
    pub fn parts(&self) -> [&[usize]; 4] {
        [
            &self.target_train,
            &self.target_test,
            &self.shadow_train,
            &self.shadow_test,
        ]
    }
}

/// Stratified four-way index assignment.
///
/// Samples are shuffled within each class, the classes are laid end to end and
/// the result is dealt round-robin. Part sizes therefore differ by at most one,
/// with the remainder going to target_train, then target_test, then shadow_train.
pub fn quad_split_indices(labels: &[usize], num_classes: usize, seed: u64) -> Result<SplitIndices> {
    let n = labels.len();
    if n < 4 {
        return Err(Error::DatasetTooSmall { needed: 4, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes.max(1)];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y.min(num_classes.saturating_sub(1))].push(i);
    }
    let mut parts: [Vec<usize>; 4] = Default::default();
    let mut dealt = 0usize;
    for class in &mut by_class {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            parts[dealt % 4].push(i);
            dealt += 1;
        }
    }
    let [target_train, target_test, shadow_train, shadow_test] = parts;
    Ok(SplitIndices {
        target_train,
        target_test,
        shadow_train,
        shadow_test,
    })
}

pub fn quad_split(ds: &LabeledImageDataset, seed: u64) -> Result<QuadSplit> {
    let idx = quad_split_indices(ds.labels(), ds.num_classes(), seed)?;
    Ok(apply_split(ds, &idx, seed))
}

pub fn apply_split(ds: &LabeledImageDataset, idx: &SplitIndices, seed: u64) -> QuadSplit {
    QuadSplit {
        target_train: ds.subset(&idx.target_train),
        target_test: ds.subset(&idx.target_test),
        shadow_train: ds.subset(&idx.shadow_train),
        shadow_test: ds.subset(&idx.shadow_test),
        seed,
    }
}

/// Draws `floor(fraction * |target_train|)` samples of target_train without replacement.
pub fn partial_subset(split: &QuadSplit, fraction: f64, seed: u64) -> Result<LabeledImageDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let n = split.target_train.len();
    let take = (fraction * n as f64).floor() as usize;
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    positions.truncate(take);
    positions.sort_unstable();
    Ok(split.target_train.subset(&positions))
}

/// Replayable description of a dataset and its split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub num_classes: usize,
    pub channels: usize,
    pub normalization: Normalization,
    pub attribute_names: Vec<String>,
    pub split_seed: u64,
    pub stratified: bool,
    pub content_hash: String,
    pub parts: SplitIndices,
}

impl DatasetManifest {
    pub fn new(ds: &LabeledImageDataset, parts: SplitIndices, split_seed: u64) -> Self {
        DatasetManifest {
            name: ds.name().to_string(),
            num_classes: ds.num_classes(),
            channels: ds.channels(),
            normalization: ds.normalization().clone(),
            attribute_names: ds.attribute_names(),
            split_seed,
            stratified: true,
            content_hash: ds.content_hash(),
            parts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn labelled(n: usize, classes: usize) -> LabeledImageDataset {
        LabeledImageDataset::new(
            "t",
            1,
            classes,
            vec![0.0; n * 1024],
            (0..n).map(|i| i % classes).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn thousand_samples_split_evenly() {
        let s = quad_split(&labelled(1000, 4), 3).unwrap();
        for part in [&s.target_train, &s.target_test, &s.shadow_train, &s.shadow_test] {
            assert_eq!(part.len(), 250);
        }
    }

    #[test]
    fn remainder_goes_to_target_train_first() {
        let s = quad_split(&labelled(1001, 4), 3).unwrap();
        let sizes = [
            s.target_train.len(),
            s.target_test.len(),
            s.shadow_train.len(),
            s.shadow_test.len(),
        ];
        assert_eq!(sizes, [251, 250, 250, 250]);
        let s = quad_split(&labelled(1003, 3), 3).unwrap();
        assert_eq!(
            [s.target_train.len(), s.target_test.len(), s.shadow_train.len(), s.shadow_test.len()],
            [251, 251, 251, 250]
        );
    }

    #[test]
    fn same_seed_same_assignment() {
        let ds = labelled(97, 3);
        let a = quad_split_indices(ds.labels(), 3, 11).unwrap();
        let b = quad_split_indices(ds.labels(), 3, 11).unwrap();
        let c = quad_split_indices(ds.labels(), 3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(
            quad_split(&labelled(3, 1), 0),
            Err(Error::DatasetTooSmall { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn partial_subset_draws_seventy_percent_of_target_train() {
        let s = quad_split(&labelled(1000, 4), 5).unwrap();
        let p = partial_subset(&s, 0.7, 9).unwrap();
        assert_eq!(p.len(), 175);
        assert!(p.ids().iter().all(|id| s.target_train.ids().contains(id)));
        let full = partial_subset(&s, 1.0, 9).unwrap();
        let mut a = full.ids().to_vec();
        let mut b = s.target_train.ids().to_vec();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert!(matches!(partial_subset(&s, 0.0, 9), Err(Error::InvalidFraction(_))));
        assert!(partial_subset(&s, 1.5, 9).is_err());
    }

    #[test]
    fn stratified_parts_are_class_balanced() {
        let s = quad_split(&labelled(400, 4), 1).unwrap();
        for part in [&s.target_train, &s.shadow_test] {
            assert_eq!(part.class_counts(), vec![25, 25, 25, 25]);
        }
    }
}
