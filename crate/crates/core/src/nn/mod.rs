// SPDX-License-Identifier: Apache-2.0

//! Minimal CPU neural-network engine: layer stacks with explicit backward
//! passes, losses over logits and first-order optimisers.

pub mod gemm;
pub mod loss;
mod network;
pub mod optim;
mod tensor;

pub use network::{LayerKind, LayerSpec, Network, Trace};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use tensor::Tensor;
