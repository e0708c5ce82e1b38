// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec};

pub const SIMPLE_CNN: &str = "simple_cnn";
pub const SIMPLE_CNN_SMALL: &str = "simple_cnn_small";
pub const MLP: &str = "mlp";
pub const LINEAR: &str = "linear";

/// Name of the layer whose output is the penultimate embedding in every
/// built-in architecture.
pub const EMBEDDING_LAYER: &str = "embedding";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: String,
    pub num_classes: usize,
    /// `[channels, 32, 32]`
    pub input_shape: Vec<usize>,
}

impl ModelSpec {
    pub fn new(architecture: impl Into<String>, num_classes: usize, channels: usize) -> Self {
        ModelSpec {
            architecture: architecture.into(),
            num_classes,
            input_shape: vec![channels, 32, 32],
        }
    }
}

/// Layer list plus the name of the layer used for embeddings.
#[derive(Clone, Debug)]
pub struct Layout {
    pub layers: Vec<LayerSpec>,
    pub embedding_layer: String,
}

pub type Builder = fn(&ModelSpec) -> Result<Layout>;

/// Name → builder table. Larger backbones plug in through [`Architectures::register`].
#[derive(Clone)]
pub struct Architectures {
    builders: BTreeMap<String, Builder>,
}

impl Default for Architectures {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Architectures {
    pub fn builtin() -> Self {
        let mut a = Architectures {
            builders: BTreeMap::new(),
        };
        a.register(SIMPLE_CNN, |s| Ok(simple_cnn(s, 32, 64, 128)));
        a.register(SIMPLE_CNN_SMALL, |s| Ok(simple_cnn(s, 16, 32, 64)));
        a.register(MLP, |s| Ok(mlp(s, 128)));
        a.register(LINEAR, |s| Ok(linear(s)));
        a
    }

    pub fn register(&mut self, name: &str, builder: Builder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn layout(&self, spec: &ModelSpec) -> Result<Layout> {
        let build = self
            .builders
            .get(&spec.architecture)
            .ok_or_else(|| Error::UnknownArchitecture(spec.architecture.clone()))?;
        if spec.input_shape.len() != 3 || spec.num_classes < 2 {
            return Err(Error::ShapeMismatch(format!(
                "model spec needs a [C,H,W] input and at least two classes, got {:?} / {}",
                spec.input_shape, spec.num_classes
            )));
        }
        build(spec)
    }
}

fn conv(name: &str, cin: usize, cout: usize) -> LayerSpec {
    LayerSpec::new(
        name,
        LayerKind::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: 3,
            stride: 1,
            padding: 0,
        },
    )
}

/// Two 3x3 conv blocks (ReLU, 2x2 max-pool) followed by two fully connected layers.
fn simple_cnn(spec: &ModelSpec, c1: usize, c2: usize, hidden: usize) -> Layout {
    let (c, h, w) = (spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]);
    let side = |v: usize| ((v - 2) / 2 - 2) / 2;
    let flat = c2 * side(h) * side(w);
    Layout {
        layers: vec![
            conv("conv1", c, c1),
            LayerSpec::new("relu1", LayerKind::Relu),
            LayerSpec::new("pool1", LayerKind::MaxPool2d { size: 2 }),
            conv("conv2", c1, c2),
            LayerSpec::new("relu2", LayerKind::Relu),
            LayerSpec::new("pool2", LayerKind::MaxPool2d { size: 2 }),
            LayerSpec::new("flatten", LayerKind::Flatten),
            LayerSpec::new(
                "fc1",
                LayerKind::Linear {
                    inputs: flat,
                    outputs: hidden,
                },
            ),
            LayerSpec::new(EMBEDDING_LAYER, LayerKind::Relu),
            LayerSpec::new(
                "fc2",
                LayerKind::Linear {
                    inputs: hidden,
                    outputs: spec.num_classes,
                },
            ),
        ],
        embedding_layer: EMBEDDING_LAYER.into(),
    }
}

fn mlp(spec: &ModelSpec, hidden: usize) -> Layout {
    let flat = spec.input_shape.iter().product();
    Layout {
        layers: vec![
            LayerSpec::new("flatten", LayerKind::Flatten),
            LayerSpec::new(
                "fc1",
                LayerKind::Linear {
                    inputs: flat,
                    outputs: hidden,
                },
            ),
            LayerSpec::new(EMBEDDING_LAYER, LayerKind::Relu),
            LayerSpec::new(
                "fc2",
                LayerKind::Linear {
                    inputs: hidden,
                    outputs: spec.num_classes,
                },
            ),
        ],
        embedding_layer: EMBEDDING_LAYER.into(),
    }
}

/// Softmax regression; the "embedding" is the flattened input.
fn linear(spec: &ModelSpec) -> Layout {
    let flat = spec.input_shape.iter().product();
    Layout {
        layers: vec![
            LayerSpec::new(EMBEDDING_LAYER, LayerKind::Flatten),
            LayerSpec::new(
                "fc",
                LayerKind::Linear {
                    inputs: flat,
                    outputs: spec.num_classes,
                },
            ),
        ],
        embedding_layer: EMBEDDING_LAYER.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_cnn_has_two_convs_and_two_linears() {
        let layout = Architectures::builtin()
            .layout(&ModelSpec::new(SIMPLE_CNN, 10, 3))
            .unwrap();
        let convs = layout
            .layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv2d { .. }))
            .count();
        let fcs = layout
            .layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Linear { .. }))
            .count();
        assert_eq!((convs, fcs), (2, 2));
        // 32 -> conv 30 -> pool 15 -> conv 13 -> pool 6
        assert!(layout.layers.iter().any(|l| l.kind
            == LayerKind::Linear {
                inputs: 64 * 6 * 6,
                outputs: 128
            }));
    }

    #[test]
    fn unknown_architecture_is_reported() {
        let err = Architectures::builtin()
            .layout(&ModelSpec::new("resnet18", 10, 3))
            .unwrap_err();
        assert!(matches!(err, Error::UnknownArchitecture(_)));
    }
}
