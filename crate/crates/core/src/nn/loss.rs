// SPDX-License-Identifier: Apache-2.0

//! Losses over logits. Every function returns the batch-mean loss and the
//! gradient w.r.t. the logits.

use super::tensor::Tensor;

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    softmax_t(logits, 1.0)
}

/// Softmax of `logits / temperature`.
pub fn softmax_t(logits: &[f32], temperature: f32) -> Vec<f32> {
    let max = logits.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits
        .iter()
        .map(|&v| (((v - max) / temperature) as f64).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / sum) as f32).collect()
}

pub fn log_softmax_t(logits: &[f32], temperature: f32) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|&v| v as f64 / temperature as f64).collect();
    let max = scaled.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scaled.iter().map(|v| v - lse).collect()
}

/// Row-wise softmax over a batch of logits.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let data = logits.rows().flat_map(softmax).collect();
    Tensor::new(logits.shape().to_vec(), data).expect("same shape")
}

/// Per-sample cross-entropy `-log softmax(z)[y]`.
pub fn cross_entropy_per_sample(logits: &Tensor, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .zip(labels)
        .map(|(row, &y)| -log_softmax_t(row, 1.0)[y])
        .collect()
}

pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let n = logits.batch().max(1) as f32;
    let mut grad = Vec::with_capacity(logits.data().len());
    let mut total = 0.0;
    for (row, &y) in logits.rows().zip(labels) {
        let logp = log_softmax_t(row, 1.0);
        total -= logp[y];
        for (j, lp) in logp.iter().enumerate() {
            let p = lp.exp() as f32;
            grad.push((p - if j == y { 1.0 } else { 0.0 }) / n);
        }
    }
    (
        total / n as f64,
        Tensor::new(logits.shape().to_vec(), grad).expect("same shape"),
    )
}

/// Mean squared error between `softmax(z)` and target posteriors, averaged
/// over all elements.
pub fn mse_on_posteriors(logits: &Tensor, targets: &Tensor) -> (f64, Tensor) {
    let count = logits.data().len().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.data().len());
    for (row, t) in logits.rows().zip(targets.rows()) {
        let p = softmax(row);
        let d: Vec<f64> = p.iter().zip(t).map(|(a, b)| (*a - *b) as f64).collect();
        total += d.iter().map(|v| v * v).sum::<f64>();
        // dL/dp = 2 d / count, pushed through the softmax Jacobian
        let g: Vec<f64> = d.iter().map(|v| 2.0 * v / count).collect();
        let dot: f64 = g.iter().zip(&p).map(|(gi, pi)| gi * *pi as f64).sum();
        grad.extend(p.iter().zip(&g).map(|(pi, gi)| (*pi as f64 * (gi - dot)) as f32));
    }
    (
        total / count,
        Tensor::new(logits.shape().to_vec(), grad).expect("same shape"),
    )
}

/// `KL(softmax(t/T) || softmax(s/T))`, batch-mean.
pub fn kl_divergence_t(student: &Tensor, teacher: &Tensor, temperature: f32) -> (f64, Tensor) {
    let n = student.batch().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(student.data().len());
    for (s, t) in student.rows().zip(teacher.rows()) {
        let ls = log_softmax_t(s, temperature);
        let lt = log_softmax_t(t, temperature);
        total += lt
            .iter()
            .zip(&ls)
            .map(|(a, b)| a.exp() * (a - b))
            .sum::<f64>();
        grad.extend(
            ls.iter()
                .zip(&lt)
                .map(|(a, b)| ((a.exp() - b.exp()) / (temperature as f64 * n)) as f32),
        );
    }
    (
        total / n,
        Tensor::new(student.shape().to_vec(), grad).expect("same shape"),
    )
}

/// Distillation objective `alpha * T^2 * KL + (1 - alpha) * CE`.
pub fn distillation(
    student: &Tensor,
    teacher: &Tensor,
    labels: &[usize],
    temperature: f32,
    alpha: f32,
) -> (f64, Tensor) {
    let (kl, gkl) = kl_divergence_t(student, teacher, temperature);
    let (ce, gce) = cross_entropy(student, labels);
    let soft = alpha as f64 * (temperature as f64).powi(2);
    let hard = 1.0 - alpha as f64;
    let grad = gkl
        .data()
        .iter()
        .zip(gce.data())
        .map(|(a, b)| (soft * *a as f64 + hard * *b as f64) as f32)
        .collect();
    (
        soft * kl + hard * ce,
        Tensor::new(student.shape().to_vec(), grad).expect("same shape"),
    )
}
