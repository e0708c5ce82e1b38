// SPDX-License-Identifier: Apache-2.0

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.
    MaxPool2d { size: usize },
    Linear { inputs: usize, outputs: usize },
    Relu,
    LeakyRelu { slope: f32 },
    Tanh,
    Flatten,
    Reshape { shape: Vec<usize> },
    /// Nearest-neighbour upsampling by a factor of two.
    Upsample2x,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
        }
    }

    fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerKind::Linear { inputs, outputs } => outputs * inputs + outputs,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerKind::Linear { inputs, .. } => inputs,
            _ => 0,
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let len: usize = input.iter().product();
        let mismatch = |what: &str| {
            Err(Error::ShapeMismatch(format!(
                "layer `{}` ({}) cannot take input {:?}",
                self.name, what, input
            )))
        };
        match &self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != *in_channels || *stride == 0 {
                    return mismatch("conv2d");
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < *kernel || w < *kernel {
                    return mismatch("conv2d");
                }
                Ok(vec![
                    *out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
            LayerKind::MaxPool2d { size } => {
                if input.len() != 3 || *size == 0 || input[1] < *size || input[2] < *size {
                    return mismatch("maxpool2d");
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            LayerKind::Linear { inputs, outputs } => {
                if len != *inputs {
                    return mismatch("linear");
                }
                Ok(vec![*outputs])
            }
            LayerKind::Relu | LayerKind::LeakyRelu { .. } | LayerKind::Tanh => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![len]),
            LayerKind::Reshape { shape } => {
                if shape.iter().product::<usize>() != len {
                    return mismatch("reshape");
                }
                Ok(shape.clone())
            }
            LayerKind::Upsample2x => {
                if input.len() != 3 {
                    return mismatch("upsample");
                }
                Ok(vec![input[0], input[1] * 2, input[2] * 2])
            }
        }
    }
}

/// A feed-forward stack of layers with all parameters in one flat buffer.
///
/// Layer `i` owns `params[offsets[i]..offsets[i + 1]]`, laid out as the weight
/// (row-major, `[out, in]` or `[out_c, in_c, k, k]`) followed by the bias.
#[derive(Clone, Debug)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    params: Vec<f32>,
}

enum Cache {
    None,
    Input(Tensor),
    Output(Tensor),
    Cols(Vec<f32>),
    Argmax(Vec<u32>),
}

/// Intermediate activations recorded by [`Network::forward_train`].
pub struct Trace {
    caches: Vec<Cache>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl Network {
    /// Builds a network with PyTorch-style uniform initialisation (bound `1/sqrt(fan_in)`).
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::from_parts(input_shape, layers, None)?;
        for i in 0..net.layers.len() {
            let fan_in = net.layers[i].fan_in();
            if fan_in == 0 {
                continue;
            }
            let bound = 1.0 / (fan_in as f32).sqrt();
            for p in &mut net.params[net.offsets[i]..net.offsets[i + 1]] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from its layer list and (optionally) a stored parameter vector.
    pub fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        params: Option<Vec<f32>>,
    ) -> Result<Self> {
        let mut shapes = vec![input_shape.clone()];
        let mut offsets = vec![0];
        for layer in &layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
            offsets.push(offsets.last().expect("non-empty") + layer.param_count());
        }
        let total = *offsets.last().expect("non-empty");
        let params = match params {
            Some(p) if p.len() == total => p,
            Some(p) => {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} parameters, got {}",
                    total,
                    p.len()
                )))
            }
            None => vec![0.0; total],
        };
        Ok(Network {
            input_shape,
            layers,
            shapes,
            offsets,
            params,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-sample output shape of the named layer.
    pub fn layer_output_shape(&self, name: &str) -> Option<&[usize]> {
        self.layer_index(name).map(|i| self.shapes[i + 1].as_slice())
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    /// Parameter range owned by layer `index`.
    pub fn param_range(&self, index: usize) -> Range<usize> {
        self.offsets[index]..self.offsets[index + 1]
    }

    /// Index of the last layer that owns parameters.
    pub fn last_parametric_layer(&self) -> Option<usize> {
        (0..self.layers.len())
            .rev()
            .find(|&i| self.layers[i].param_count() > 0)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.sample_len() != self.input_shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "network expects samples of shape {:?}, got {:?}",
                self.input_shape,
                x.sample_shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_range(x, self.layers.len())
    }

    /// Output of the named layer (inclusive).
    pub fn forward_until(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let i = self
            .layer_index(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("no layer named `{name}`")))?;
        self.forward_range(x, i + 1)
    }

    /// Output of the first `end` layers.
    pub fn forward_prefix(&self, x: &Tensor, end: usize) -> Result<Tensor> {
        self.forward_range(x, end.min(self.layers.len()))
    }

    /// The sub-network made of layers `start..`, sharing (copied) parameters.
    pub fn tail(&self, start: usize) -> Network {
        Network {
            input_shape: self.shapes[start].clone(),
            layers: self.layers[start..].to_vec(),
            shapes: self.shapes[start..].to_vec(),
            offsets: self.offsets[start..]
                .iter()
                .map(|o| o - self.offsets[start])
                .collect(),
            params: self.params[self.offsets[start]..].to_vec(),
        }
    }

    fn forward_range(&self, x: &Tensor, end: usize) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone().reshaped(&self.input_shape)?;
        for i in 0..end {
            cur = self.layer_forward(i, &cur, None);
        }
        Ok(cur)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_train(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut cur = x.clone().reshaped(&self.input_shape)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            let mut cache = Cache::None;
            let next = self.layer_forward(i, &cur, Some(&mut cache));
            match (&self.layers[i].kind, &mut cache) {
                (LayerKind::Linear { .. }, c)
                | (LayerKind::Relu, c)
                | (LayerKind::LeakyRelu { .. }, c) => *c = Cache::Input(cur),
                (LayerKind::Tanh, c) => *c = Cache::Output(next.clone()),
                _ => {}
            }
            caches.push(cache);
            cur = next;
        }
        Ok(Trace {
            caches,
            output: cur,
        })
    }

    /// Back-propagates `grad_out` (gradient w.r.t. the network output).
    ///
    /// Parameter gradients are accumulated into `grads` when given; the
    /// gradient w.r.t. the input is returned.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_out: &Tensor,
        mut grads: Option<&mut [f32]>,
    ) -> Result<Tensor> {
        if grad_out.shape() != trace.output.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient shape {:?} differs from output shape {:?}",
                grad_out.shape(),
                trace.output.shape()
            )));
        }
        if let Some(g) = grads.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::ShapeMismatch("gradient buffer size".into()));
            }
        }
        let mut grad = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let range = self.param_range(i);
            let layer_grads = grads.as_deref_mut().map(|g| &mut g[range]);
            grad = self.layer_backward(i, &trace.caches[i], grad, layer_grads);
        }
        Ok(grad)
    }

    fn layer_forward(&self, i: usize, x: &Tensor, cache: Option<&mut Cache>) -> Tensor {
        let in_shape = &self.shapes[i];
        let out_shape = &self.shapes[i + 1];
        let n = x.batch();
        let mut out_full = vec![n];
        out_full.extend_from_slice(out_shape);
        let params = &self.params[self.param_range(i)];
        match &self.layers[i].kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let geom = ConvGeom {
                    c: *in_channels,
                    h: in_shape[1],
                    w: in_shape[2],
                    k: *kernel,
                    s: *stride,
                    p: *padding,
                    oh: out_shape[1],
                    ow: out_shape[2],
                };
                let ckk = geom.c * geom.k * geom.k;
                let ohw = geom.oh * geom.ow;
                let (weight, bias) = params.split_at(out_channels * ckk);
                let mut out = Tensor::zeros(out_full);
                let keep = cache.is_some();
                let mut all_cols = if keep {
                    vec![0.0; n * ckk * ohw]
                } else {
                    Vec::new()
                };
                let mut scratch = vec![0.0; ckk * ohw];
                for b in 0..n {
                    let cols: &mut [f32] = if keep {
                        &mut all_cols[b * ckk * ohw..(b + 1) * ckk * ohw]
                    } else {
                        &mut scratch
                    };
                    im2col(x.sample(b), &geom, cols);
                    let y = out.sample_mut(b);
                    for (oc, row) in y.chunks_mut(ohw).enumerate() {
                        row.fill(bias[oc]);
                    }
                    gemm(
                        Mat::new(weight, *out_channels, ckk),
                        Mat::new(cols, ckk, ohw),
                        1.0,
                        y,
                    );
                }
                if let Some(c) = cache {
                    *c = Cache::Cols(all_cols);
                }
                out
            }
            LayerKind::MaxPool2d { size } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let mut out = Tensor::zeros(out_full);
                let mut argmax = Vec::with_capacity(if cache.is_some() { n * c * oh * ow } else { 0 });
                for b in 0..n {
                    let xs = x.sample(b);
                    let ys = out.sample_mut(b);
                    for ch in 0..c {
                        for i0 in 0..oh {
                            for j0 in 0..ow {
                                let mut best = f32::NEG_INFINITY;
                                let mut best_idx = 0;
                                for di in 0..*size {
                                    for dj in 0..*size {
                                        let idx = ch * h * w + (i0 * size + di) * w + j0 * size + dj;
                                        if xs[idx] > best {
                                            best = xs[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                ys[ch * oh * ow + i0 * ow + j0] = best;
                                if cache.is_some() {
                                    argmax.push(best_idx as u32);
                                }
                            }
                        }
                    }
                }
                if let Some(c) = cache {
                    *c = Cache::Argmax(argmax);
                }
                out
            }
            LayerKind::Linear { inputs, outputs } => {
                let (weight, bias) = params.split_at(outputs * inputs);
                let mut data = Vec::with_capacity(n * outputs);
                for _ in 0..n {
                    data.extend_from_slice(bias);
                }
                gemm(
                    Mat::new(x.data(), n, *inputs),
                    Mat::new(weight, *outputs, *inputs).t(),
                    1.0,
                    &mut data,
                );
                Tensor::new(out_full, data).expect("shape computed at build")
            }
            LayerKind::Relu => map(x, &out_full, |v| v.max(0.0)),
            LayerKind::LeakyRelu { slope } => {
                let s = *slope;
                map(x, &out_full, move |v| if v > 0.0 { v } else { s * v })
            }
            LayerKind::Tanh => map(x, &out_full, f32::tanh),
            LayerKind::Flatten | LayerKind::Reshape { .. } => {
                x.clone().reshaped(out_shape).expect("shape computed at build")
            }
            LayerKind::Upsample2x => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let mut out = Tensor::zeros(out_full);
                for b in 0..n {
                    let xs = x.sample(b);
                    let ys = out.sample_mut(b);
                    for ch in 0..c {
                        for i0 in 0..2 * h {
                            for j0 in 0..2 * w {
                                ys[ch * 4 * h * w + i0 * 2 * w + j0] =
                                    xs[ch * h * w + (i0 / 2) * w + j0 / 2];
                            }
                        }
                    }
                }
                out
            }
        }
    }

    fn layer_backward(
        &self,
        i: usize,
        cache: &Cache,
        grad: Tensor,
        grads: Option<&mut [f32]>,
    ) -> Tensor {
        let in_shape = &self.shapes[i];
        let out_shape = &self.shapes[i + 1];
        let n = grad.batch();
        let mut in_full = vec![n];
        in_full.extend_from_slice(in_shape);
        let params = &self.params[self.param_range(i)];
        match (&self.layers[i].kind, cache) {
            (
                LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Cache::Cols(cols),
            ) => {
                let geom = ConvGeom {
                    c: *in_channels,
                    h: in_shape[1],
                    w: in_shape[2],
                    k: *kernel,
                    s: *stride,
                    p: *padding,
                    oh: out_shape[1],
                    ow: out_shape[2],
                };
                let ckk = geom.c * geom.k * geom.k;
                let ohw = geom.oh * geom.ow;
                let weight = &params[..out_channels * ckk];
                let mut dx = Tensor::zeros(in_full);
                let mut dcols = vec![0.0; ckk * ohw];
                let mut grads = grads;
                for b in 0..n {
                    let dy = grad.sample(b);
                    let cols_b = &cols[b * ckk * ohw..(b + 1) * ckk * ohw];
                    if let Some(g) = grads.as_deref_mut() {
                        let (gw, gb) = g.split_at_mut(out_channels * ckk);
                        gemm(
                            Mat::new(dy, *out_channels, ohw),
                            Mat::new(cols_b, ckk, ohw).t(),
                            1.0,
                            gw,
                        );
                        for (oc, row) in dy.chunks(ohw).enumerate() {
                            gb[oc] += row.iter().sum::<f32>();
                        }
                    }
                    gemm(
                        Mat::new(weight, *out_channels, ckk).t(),
                        Mat::new(dy, *out_channels, ohw),
                        0.0,
                        &mut dcols,
                    );
                    col2im(&dcols, &geom, dx.sample_mut(b));
                }
                dx
            }
            (LayerKind::MaxPool2d { .. }, Cache::Argmax(argmax)) => {
                let mut dx = Tensor::zeros(in_full);
                let per = grad.sample_len();
                for b in 0..n {
                    let dy = grad.sample(b);
                    let idx = &argmax[b * per..(b + 1) * per];
                    let dxs = dx.sample_mut(b);
                    for (g, &j) in dy.iter().zip(idx) {
                        dxs[j as usize] += g;
                    }
                }
                dx
            }
            (LayerKind::Linear { inputs, outputs }, Cache::Input(x)) => {
                let weight = &params[..outputs * inputs];
                if let Some(g) = grads {
                    let (gw, gb) = g.split_at_mut(outputs * inputs);
                    gemm(
                        Mat::new(grad.data(), n, *outputs).t(),
                        Mat::new(x.data(), n, *inputs),
                        1.0,
                        gw,
                    );
                    for row in grad.rows() {
                        for (b, v) in gb.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                }
                let mut dx = vec![0.0; n * inputs];
                gemm(
                    Mat::new(grad.data(), n, *outputs),
                    Mat::new(weight, *outputs, *inputs),
                    0.0,
                    &mut dx,
                );
                Tensor::new(in_full, dx).expect("shape computed at build")
            }
            (LayerKind::Relu, Cache::Input(x)) => zip_map(x, grad, in_full, |xi, g| {
                if xi > 0.0 {
                    g
                } else {
                    0.0
                }
            }),
            (LayerKind::LeakyRelu { slope }, Cache::Input(x)) => {
                let s = *slope;
                zip_map(x, grad, in_full, move |xi, g| if xi > 0.0 { g } else { s * g })
            }
            (LayerKind::Tanh, Cache::Output(y)) => {
                zip_map(y, grad, in_full, |yi, g| g * (1.0 - yi * yi))
            }
            (LayerKind::Flatten | LayerKind::Reshape { .. }, _) => {
                grad.reshaped(in_shape).expect("shape computed at build")
            }
            (LayerKind::Upsample2x, _) => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let mut dx = Tensor::zeros(in_full);
                for b in 0..n {
                    let dy = grad.sample(b);
                    let dxs = dx.sample_mut(b);
                    for ch in 0..c {
                        for i0 in 0..2 * h {
                            for j0 in 0..2 * w {
                                dxs[ch * h * w + (i0 / 2) * w + j0 / 2] +=
                                    dy[ch * 4 * h * w + i0 * 2 * w + j0];
                            }
                        }
                    }
                }
                dx
            }
            _ => unreachable!("trace recorded by forward_train matches layer kinds"),
        }
    }
}

fn map(x: &Tensor, shape: &[usize], f: impl Fn(f32) -> f32) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(shape.to_vec(), data).expect("same length")
}

fn zip_map(cached: &Tensor, grad: Tensor, shape: Vec<usize>, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let mut data = grad.into_data();
    for (g, &c) in data.iter_mut().zip(cached.data()) {
        *g = f(c, *g);
    }
    Tensor::new(shape, data).expect("same length")
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
}

fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let ohw = g.oh * g.ow;
    for ch in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = ((ch * g.k + ki) * g.k + kj) * ohw;
                for oi in 0..g.oh {
                    let ii = (oi * g.s + ki) as isize - g.p as isize;
                    for oj in 0..g.ow {
                        let jj = (oj * g.s + kj) as isize - g.p as isize;
                        cols[row + oi * g.ow + oj] =
                            if ii >= 0 && jj >= 0 && (ii as usize) < g.h && (jj as usize) < g.w {
                                x[ch * g.h * g.w + ii as usize * g.w + jj as usize]
                            } else {
                                0.0
                            };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let ohw = g.oh * g.ow;
    for ch in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = ((ch * g.k + ki) * g.k + kj) * ohw;
                for oi in 0..g.oh {
                    let ii = (oi * g.s + ki) as isize - g.p as isize;
                    if ii < 0 || ii as usize >= g.h {
                        continue;
                    }
                    for oj in 0..g.ow {
                        let jj = (oj * g.s + kj) as isize - g.p as isize;
                        if jj >= 0 && (jj as usize) < g.w {
                            dx[ch * g.h * g.w + ii as usize * g.w + jj as usize] +=
                                cols[row + oi * g.ow + oj];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cnn(rng: &mut ChaCha8Rng) -> Network {
        Network::new(
            vec![2, 6, 6],
            vec![
                LayerSpec::new(
                    "conv",
                    LayerKind::Conv2d {
                        in_channels: 2,
                        out_channels: 3,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                ),
                LayerSpec::new("act", LayerKind::LeakyRelu { slope: 0.1 }),
                LayerSpec::new("pool", LayerKind::MaxPool2d { size: 2 }),
                LayerSpec::new(
                    "down",
                    LayerKind::Conv2d {
                        in_channels: 3,
                        out_channels: 2,
                        kernel: 2,
                        stride: 2,
                        padding: 1,
                    },
                ),
                LayerSpec::new("up", LayerKind::Upsample2x),
                LayerSpec::new("tanh", LayerKind::Tanh),
                LayerSpec::new("flat", LayerKind::Flatten),
                LayerSpec::new("fc", LayerKind::Linear { inputs: 32, outputs: 4 }),
            ],
            rng,
        )
        .unwrap()
    }

    // Scalar objective sum(out * weights) so the upstream gradient is `weights`.
    fn objective(net: &Network, x: &Tensor, w: &[f32]) -> f64 {
        let y = net.forward(x).unwrap();
        y.data().iter().zip(w).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = tiny_cnn(&mut rng);
        let x_data: Vec<f32> = (0..2 * 72).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![2, 2, 6, 6], x_data).unwrap();
        let w: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let trace = net.forward_train(&x).unwrap();
        let upstream = Tensor::new(vec![2, 4], w.clone()).unwrap();
        let mut grads = vec![0.0; net.param_count()];
        let dx = net.backward(&trace, &upstream, Some(&mut grads)).unwrap();

        let eps = 1e-2f32;
        for idx in (0..net.param_count()).step_by(7) {
            let orig = net.params()[idx];
            net.params_mut()[idx] = orig + eps;
            let up = objective(&net, &x, &w);
            net.params_mut()[idx] = orig - eps;
            let down = objective(&net, &x, &w);
            net.params_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps as f64);
            assert!(
                (numeric - grads[idx] as f64).abs() < 2e-2,
                "param {idx}: numeric {numeric} analytic {}",
                grads[idx]
            );
        }
        for idx in (0..x.data().len()).step_by(5) {
            let mut xp = x.clone();
            xp.data_mut()[idx] += eps;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= eps;
            let numeric = (objective(&net, &xp, &w) - objective(&net, &xm, &w)) / (2.0 * eps as f64);
            assert!(
                (numeric - dx.data()[idx] as f64).abs() < 2e-2,
                "input {idx}: numeric {numeric} analytic {}",
                dx.data()[idx]
            );
        }
    }

    #[test]
    fn forward_until_returns_named_layer_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = tiny_cnn(&mut rng);
        let x = Tensor::zeros(vec![3, 2, 6, 6]);
        let h = net.forward_until(&x, "pool").unwrap();
        assert_eq!(h.shape(), &[3, 3, 3, 3]);
        assert!(net.forward_until(&x, "missing").is_err());
    }

    #[test]
    fn rejects_wrong_parameter_count() {
        let layers = vec![LayerSpec::new("fc", LayerKind::Linear { inputs: 3, outputs: 2 })];
        assert!(Network::from_parts(vec![3], layers.clone(), Some(vec![0.0; 7])).is_err());
        assert!(Network::from_parts(vec![3], layers, Some(vec![0.0; 8])).is_ok());
    }
}
