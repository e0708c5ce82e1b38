// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("length {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// F1 of one class treated as positive. Zero when the class is never
/// predicted and never present.
pub fn f1_for_class(pred: &[usize], truth: &[usize], positive: usize) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Binary F1 with class 1 (member) as positive.
pub fn f1_binary(pred: &[usize], truth: &[usize]) -> Result<f64> {
    f1_for_class(pred, truth, 1)
}

/// Unweighted mean of per-class F1 over `0..num_classes`.
pub fn macro_f1(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    let mut sum = 0.0;
    for c in 0..num_classes {
        sum += f1_for_class(pred, truth, c)?;
    }
    Ok(sum / num_classes as f64)
}

fn check_binary(labels: &[usize]) -> Result<(usize, usize)> {
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::ShapeMismatch(format!("binary label expected, got {bad}")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("AUC needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    same_len(scores.len(), labels.len())?;
    let (pos, neg) = check_binary(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (0,0) to (1,1), one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[usize]) -> Result<Vec<RocPoint>> {
    same_len(scores.len(), labels.len())?;
    let (pos, neg) = check_binary(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(pts)
}

pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    let s: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    Ok(s / a.len() as f64)
}

/// Pearson correlation; `ZeroVariance` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Fraction of positions where two prediction vectors agree.
pub fn agreement_rate(a: &[usize], b: &[usize]) -> Result<f64> {
    accuracy(a, b)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_and_tied() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn auc_needs_both_classes() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn roc_ends_at_one_one() {
        let r = roc_curve(&[0.3, 0.7, 0.7, 0.1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(r.first().unwrap().fpr, 0.0);
        let last = r.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn pearson_small_case() {
        // expected values from numpy.corrcoef
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap();
        assert!((r - 0.9933992677987828).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0]).unwrap();
        assert!((r - 0.9819805060619656).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn f1_values() {
        assert_eq!(f1_binary(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1], &[0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn std_of_single_run_is_zero() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }
}
