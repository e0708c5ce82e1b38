// SPDX-License-Identifier: Apache-2.0

//! Model inversion: reconstruct a representative input for a class, either
//! by gradient descent in input space or by searching the latent space of a
//! GAN trained on auxiliary data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::access::TargetModelHandle;
use crate::data::LabeledImageDataset;
use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, macro_f1, mse};
use crate::nn::{Adam, LayerKind, LayerSpec, Network, Tensor};
use crate::zoo::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub lr: f32,
    /// Stop once the target assigns at least this posterior to the class.
    pub threshold: f64,
    pub max_iter: usize,
    /// Stop after this many iterations without a new best loss.
    pub patience: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            lr: 1e-2,
            threshold: 0.999,
            max_iter: 3000,
            patience: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    NoImprovement,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct Inversion {
    pub class: usize,
    pub image: Vec<f32>,
    pub iterations: usize,
    pub initial_posterior: f64,
    pub final_posterior: f64,
    pub stop: StopReason,
}

/// Gradient descent on the input, starting from an all-zero image, to
/// minimise the target's cross-entropy at `class`.
pub fn invert_class(handle: &TargetModelHandle, class: usize, cfg: &InversionConfig) -> Result<Inversion> {
    if class >= handle.num_classes() {
        return Err(Error::ShapeMismatch(format!("class {class} out of range")));
    }
    let mut shape = vec![1];
    shape.extend_from_slice(handle.input_shape());
    let mut x = Tensor::zeros(shape);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut initial = None;
    let mut it = 0;
    loop {
        let (loss, g) = handle.input_gradient(&x, &[class])?;
        let p = (-loss[0]).exp();
        initial.get_or_insert(p);
        let stop = if p >= cfg.threshold {
            Some(StopReason::Threshold)
        } else if since_best >= cfg.patience {
            Some(StopReason::NoImprovement)
        } else if it >= cfg.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(Inversion {
                class,
                image: x.into_data(),
                iterations: it,
                initial_posterior: initial.unwrap_or(p),
                final_posterior: p,
                stop,
            });
        }
        if loss[0] < best {
            best = loss[0];
            since_best = 0;
        } else {
            since_best += 1;
        }
        for (v, d) in x.data_mut().iter_mut().zip(g.data()) {
            *v -= cfg.lr * d;
        }
        it += 1;
    }
}

/// Per-class mean image over a dataset.
pub fn class_average_images(ds: &LabeledImageDataset) -> Result<Vec<Vec<f32>>> {
    let len = ds.sample_shape().iter().product::<usize>();
    let mut sums = vec![vec![0.0f64; len]; ds.num_classes()];
    let mut counts = vec![0usize; ds.num_classes()];
    for i in 0..ds.len() {
        let y = ds.labels()[i];
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(ds.image(i)) {
            *s += *v as f64;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (s, n))| {
            if n == 0 {
                Err(Error::ClassMissing(c))
            } else {
                Ok(s.iter().map(|v| (v / n as f64) as f32).collect())
            }
        })
        .collect()
}

/// MSE of each reconstruction against its class's average image (in the
/// dataset's normalised space); returns the mean and the per-class values.
pub fn eval_inversion_mse(
    reconstructions: &[(usize, Vec<f32>)],
    reference: &LabeledImageDataset,
) -> Result<(f64, Vec<f64>)> {
    if reconstructions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let avg = class_average_images(reference)?;
    let per = reconstructions
        .iter()
        .map(|(c, img)| {
            let a = avg.get(*c).ok_or(Error::ClassMissing(*c))?;
            mse(img, a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

// ---------------------------------------------------------------- GAN

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanTrainConfig {
    pub noise_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            noise_dim: 100,
            epochs: 50,
            batch_size: 64,
            lr: 2e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanInversionConfig {
    pub lr: f32,
    pub momentum: f32,
    pub lambda: f32,
    pub iterations: usize,
    pub clip: f32,
}

impl Default for GanInversionConfig {
    fn default() -> Self {
        GanInversionConfig {
            lr: 1e-3,
            momentum: 0.9,
            lambda: 100.0,
            iterations: 1500,
            clip: 1.0,
        }
    }
}

/// DCGAN-style generator and discriminator for 32x32 images.
#[derive(Clone, Debug)]
pub struct Gan {
    pub generator: Network,
    pub discriminator: Network,
    pub noise_dim: usize,
    pub d_loss_history: Vec<f64>,
    pub g_loss_history: Vec<f64>,
}

fn generator_layers(noise_dim: usize, channels: usize) -> Vec<LayerSpec> {
    use LayerKind::*;
    let conv = |i, o| Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 3,
        stride: 1,
        padding: 1,
    };
    vec![
        LayerSpec::new("g_fc", Linear { inputs: noise_dim, outputs: 64 * 4 * 4 }),
        LayerSpec::new("g_relu0", Relu),
        LayerSpec::new("g_reshape", Reshape { shape: vec![64, 4, 4] }),
        LayerSpec::new("g_up1", Upsample2x),
        LayerSpec::new("g_conv1", conv(64, 32)),
        LayerSpec::new("g_relu1", Relu),
        LayerSpec::new("g_up2", Upsample2x),
        LayerSpec::new("g_conv2", conv(32, 16)),
        LayerSpec::new("g_relu2", Relu),
        LayerSpec::new("g_up3", Upsample2x),
        LayerSpec::new("g_conv3", conv(16, channels)),
        LayerSpec::new("g_tanh", Tanh),
    ]
}

fn discriminator_layers(channels: usize) -> Vec<LayerSpec> {
    use LayerKind::*;
    let conv = |i, o| Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 4,
        stride: 2,
        padding: 1,
    };
    vec![
        LayerSpec::new("d_conv1", conv(channels, 16)),
        LayerSpec::new("d_lrelu1", LeakyRelu { slope: 0.2 }),
        LayerSpec::new("d_conv2", conv(16, 32)),
        LayerSpec::new("d_lrelu2", LeakyRelu { slope: 0.2 }),
        LayerSpec::new("d_flatten", Flatten),
        LayerSpec::new("d_fc", Linear { inputs: 32 * 8 * 8, outputs: 1 }),
    ]
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f32) -> f64 {
    let x = x as f64;
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn uniform_noise(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![n, dim], (0..n * dim).map(|_| rng.gen_range(-1.0f32..=1.0)).collect())
        .expect("shape matches")
}

/// Images scaled into the generator's tanh range, per sample by max |v|.
fn to_tanh_range(x: &Tensor) -> (Tensor, f32) {
    let m = x.data().iter().fold(0.0f32, |a, v| a.max(v.abs())).max(1e-6);
    let mut t = x.clone();
    t.data_mut().iter_mut().for_each(|v| *v /= m);
    (t, m)
}

impl Gan {
    pub fn new(noise_dim: usize, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Gan {
            generator: Network::new(vec![noise_dim], generator_layers(noise_dim, channels), &mut rng)?,
            discriminator: Network::new(vec![channels, 32, 32], discriminator_layers(channels), &mut rng)?,
            noise_dim,
            d_loss_history: Vec::new(),
            g_loss_history: Vec::new(),
        })
    }

    /// Generated images, in the scale of the training data.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        self.generator.forward(z)
    }
}

/// Trains a GAN on the auxiliary dataset with the non-saturating loss.
///
/// Training images are divided by their global max |value| so they lie in
/// the generator's tanh range; the returned scale maps generated images
/// back. The scale is stored so that [`gan_invert_class`] feeds the target
/// images in its own input space.
pub fn train_gan(data: &LabeledImageDataset, cfg: &GanTrainConfig, seed: u64) -> Result<(Gan, f32)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.noise_dim == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("invalid GAN config {cfg:?}")));
    }
    let [c, h, w] = data.sample_shape();
    if (h, w) != (32, 32) {
        return Err(Error::ShapeMismatch("GAN expects 32x32 images".into()));
    }
    let mut gan = Gan::new(cfg.noise_dim, c, seed)?;
    let (real_all, scale) = to_tanh_range(&data.images());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a_4e);
    let mut g_opt = Adam::new(gan.generator.param_count(), 0.0).with_betas(0.5, 0.999);
    let mut d_opt = Adam::new(gan.discriminator.param_count(), 0.0).with_betas(0.5, 0.999);
    let mut g_grads = vec![0.0f32; gan.generator.param_count()];
    let mut d_grads = vec![0.0f32; gan.discriminator.param_count()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut d_total, mut g_total, mut batches) = (0.0, 0.0, 0);
        for idx in order.chunks(cfg.batch_size) {
            let n = idx.len();
            let real = real_all.select(idx);
            let z = uniform_noise(n, cfg.noise_dim, &mut rng);
            let g_trace = gan.generator.forward_train(&z)?;
            let fake = g_trace.output().clone();

            // discriminator: softplus(-d_real) + softplus(d_fake), batch mean
            d_grads.fill(0.0);
            let tr = gan.discriminator.forward_train(&real)?;
            let mut gr = Tensor::zeros(vec![n, 1]);
            let mut dl = 0.0;
            for i in 0..n {
                let d = tr.output().sample(i)[0];
                dl += softplus(-d);
                gr.sample_mut(i)[0] = -sigmoid(-d) / n as f32;
            }
            gan.discriminator.backward(&tr, &gr, Some(&mut d_grads))?;
            let tf = gan.discriminator.forward_train(&fake)?;
            let mut gf = Tensor::zeros(vec![n, 1]);
            for i in 0..n {
                let d = tf.output().sample(i)[0];
                dl += softplus(d);
                gf.sample_mut(i)[0] = sigmoid(d) / n as f32;
            }
            gan.discriminator.backward(&tf, &gf, Some(&mut d_grads))?;
            d_opt.step(gan.discriminator.params_mut(), &d_grads, cfg.lr);

            // generator: softplus(-D(G(z)))
            let tf = gan.discriminator.forward_train(&fake)?;
            let mut gg = Tensor::zeros(vec![n, 1]);
            let mut gl = 0.0;
            for i in 0..n {
                let d = tf.output().sample(i)[0];
                gl += softplus(-d);
                gg.sample_mut(i)[0] = -sigmoid(-d) / n as f32;
            }
            let dimg = gan.discriminator.backward(&tf, &gg, None)?;
            g_grads.fill(0.0);
            gan.generator.backward(&g_trace, &dimg, Some(&mut g_grads))?;
            g_opt.step(gan.generator.params_mut(), &g_grads, cfg.lr);

            d_total += dl / n as f64;
            g_total += gl / n as f64;
            batches += 1;
        }
        gan.d_loss_history.push(d_total / batches as f64);
        gan.g_loss_history.push(g_total / batches as f64);
    }
    Ok((gan, scale))
}

#[derive(Clone, Debug)]
pub struct GanInversion {
    pub class: usize,
    /// Reconstructions in the target's input space, one per latent start.
    pub images: Tensor,
    pub initial_posteriors: Vec<f64>,
    pub final_posteriors: Vec<f64>,
}

/// Latent-space search: minimise `-log D(G(z)) + lambda * CE(target(G(z)), class)`
/// with momentum gradient descent, `z` clipped to `[-clip, clip]`.
pub fn gan_invert_class(
    handle: &TargetModelHandle,
    gan: &Gan,
    scale: f32,
    class: usize,
    n_samples: usize,
    cfg: &GanInversionConfig,
    seed: u64,
) -> Result<GanInversion> {
    if class >= handle.num_classes() {
        return Err(Error::ShapeMismatch(format!("class {class} out of range")));
    }
    if n_samples == 0 {
        return Err(Error::EmptyDataset);
    }
    if gan.discriminator.input_shape() != handle.input_shape() {
        return Err(Error::ShapeMismatch("GAN and target disagree on input shape".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = uniform_noise(n_samples, gan.noise_dim, &mut rng);
    let mut vel = vec![0.0f32; z.data().len()];
    let classes = vec![class; n_samples];
    let posteriors = |img: &Tensor| -> Result<Vec<f64>> {
        let p = handle.query(img)?;
        Ok(p.rows().map(|r| r[class] as f64).collect())
    };
    let to_target = |g: &Tensor| {
        let mut t = g.clone();
        t.data_mut().iter_mut().for_each(|v| *v *= scale);
        t
    };
    let initial = posteriors(&to_target(&gan.generate(&z)?))?;
    for _ in 0..cfg.iterations {
        let g_trace = gan.generator.forward_train(&z)?;
        let img = g_trace.output();
        // realism term, summed over samples so each z gets its own gradient
        let d_trace = gan.discriminator.forward_train(img)?;
        let mut gd = Tensor::zeros(vec![n_samples, 1]);
        for i in 0..n_samples {
            gd.sample_mut(i)[0] = -sigmoid(-d_trace.output().sample(i)[0]);
        }
        let mut dimg = gan.discriminator.backward(&d_trace, &gd, None)?;
        let (_, dx) = handle.input_gradient(&to_target(img), &classes)?;
        for (a, b) in dimg.data_mut().iter_mut().zip(dx.data()) {
            *a += cfg.lambda * b * scale;
        }
        let dz = gan.generator.backward(&g_trace, &dimg, None)?;
        for ((v, zi), g) in vel.iter_mut().zip(z.data_mut()).zip(dz.data()) {
            *v = cfg.momentum * *v + g;
            *zi = (*zi - cfg.lr * *v).clamp(-cfg.clip, cfg.clip);
        }
    }
    let images = to_target(&gan.generate(&z)?);
    let final_posteriors = posteriors(&images)?;
    Ok(GanInversion {
        class,
        images,
        initial_posteriors: initial,
        final_posteriors,
    })
}

/// Accuracy and macro-F1 of an independent classifier on reconstructions
/// labelled with the class they were meant to depict.
pub fn eval_inversion_accuracy(
    reconstructions: &Tensor,
    intended: &[usize],
    eval_classifier: &Model,
) -> Result<(f64, f64)> {
    let pred = eval_classifier.predict(reconstructions)?;
    Ok((
        accuracy(&pred, intended)?,
        macro_f1(&pred, intended, eval_classifier.num_classes())?,
    ))
}
