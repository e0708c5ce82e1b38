// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use proptest::prelude::*;
use riskprobe::access::rank_posteriors;
use riskprobe::data::{partial_subset, quad_split, LabeledImageDataset};
use riskprobe::defenses::{clip_gradient, epsilon_from_rho, rho_per_step, zcdp_sigma_for_budget, ZcdpAccountant};
use riskprobe::eval::metrics::{auc, pearson};
use riskprobe::nn::loss::{distillation, kl_divergence_t, softmax_t};
use riskprobe::nn::Tensor;

fn brute_force_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn tiny_dataset(labels: Vec<usize>, num_classes: usize) -> LabeledImageDataset {
    let n = labels.len();
    let images = (0..n * 32 * 32).map(|v| (v % 7) as f32).collect();
    LabeledImageDataset::new("tiny", 1, num_classes, images, labels, Default::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clip_norm_is_min_of_norm_and_c(
        g in prop::collection::vec(-100.0f32..100.0, 1..64),
        c in prop::sample::select(vec![0.1f32, 1.0, 10.0]),
    ) {
        let norm = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let out = clip_gradient(&g, c);
        let n = norm(&out);
        prop_assert!(n <= c as f64 * (1.0 + 1e-6));
        prop_assert!((n - norm(&g).min(c as f64)).abs() <= 1e-6 * (1.0 + c as f64));
    }

    #[test]
    fn auc_matches_pair_counting(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..80),
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 20.0).collect();
        let labels: Vec<usize> = data.iter().map(|(_, l)| *l as usize).collect();
        let has_both = labels.contains(&0) && labels.contains(&1);
        prop_assume!(has_both);
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - brute_force_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn quad_split_partitions(
        labels in prop::collection::vec(0usize..5, 8..300),
        seed in any::<u64>(),
    ) {
        let ds = tiny_dataset(labels, 5);
        let s = quad_split(&ds, seed).unwrap();
        let parts = [&s.target_train, &s.target_test, &s.shadow_train, &s.shadow_test];
        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = BTreeSet::new();
        for p in parts {
            for id in p.ids() {
                prop_assert!(all.insert(*id), "id {} in two parts", id);
            }
        }
        prop_assert_eq!(all, (0..ds.len()).collect::<BTreeSet<_>>());
        let partial = partial_subset(&s, 0.7, seed ^ 1).unwrap();
        let train_ids: BTreeSet<usize> = s.target_train.ids().iter().copied().collect();
        prop_assert!(partial.ids().iter().all(|i| train_ids.contains(i)));
        prop_assert_eq!(partial.len(), (0.7 * s.target_train.len() as f64).floor() as usize);
    }

    #[test]
    fn ranked_posteriors_are_sorted_permutations(
        rows in prop::collection::vec(prop::collection::vec(0.0f32..1.0, 5), 1..10),
    ) {
        let flat: Vec<f32> = rows.concat();
        let p = Tensor::new(vec![rows.len(), 5], flat).unwrap();
        let r = rank_posteriors(&p);
        for (orig, ranked) in p.rows().zip(r.rows()) {
            prop_assert!(ranked.windows(2).all(|w| w[0] >= w[1]));
            let mut a = orig.to_vec();
            let mut b = ranked.to_vec();
            a.sort_by(f32::total_cmp);
            b.sort_by(f32::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn accountant_round_trip(
        log_eps in -1.0f64..1.3,
        log_delta in -8.0f64..-3.0,
        steps in 1u64..20_000,
    ) {
        let (eps, delta) = (10f64.powf(log_eps), 10f64.powf(log_delta));
        let sigma = zcdp_sigma_for_budget(eps, delta, steps).unwrap();
        let forward = epsilon_from_rho(steps as f64 * rho_per_step(sigma), delta);
        prop_assert!((forward - eps).abs() / eps < 1e-2);
    }

    #[test]
    fn accountant_epsilon_never_decreases(
        sigmas in prop::collection::vec(0.5f64..50.0, 1..40),
    ) {
        let mut acc = ZcdpAccountant::new(1e-5).unwrap();
        let mut last = acc.epsilon();
        for s in sigmas {
            acc.record(s, 1.0, String::new());
            prop_assert!(acc.epsilon() >= last);
            last = acc.epsilon();
        }
    }
}

#[test]
fn more_steps_need_more_noise() {
    let mut prev = 0.0;
    for t in [1u64, 10, 100, 1000, 10_000] {
        let s = zcdp_sigma_for_budget(1.0, 1e-5, t).unwrap();
        assert!(s > prev);
        prev = s;
    }
}

#[test]
fn pearson_matches_numpy() {
    // numpy.corrcoef reference values
    let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 3.0, 4.0, 1.0, 2.0]).unwrap();
    assert!((r - -0.8).abs() < 1e-12);
}

#[test]
fn distillation_at_unit_temperature_and_full_alpha_is_kl() {
    let s = Tensor::new(vec![2, 3], vec![0.1, -0.3, 2.0, 1.0, 0.0, -1.0]).unwrap();
    let t = Tensor::new(vec![2, 3], vec![0.5, 0.2, 1.0, -1.0, 2.0, 0.0]).unwrap();
    let (d, gd) = distillation(&s, &t, &[2, 0], 1.0, 1.0);
    let (kl, gkl) = kl_divergence_t(&s, &t, 1.0);
    assert!((d - kl).abs() < 1e-12);
    assert_eq!(gd.data(), gkl.data());
    // independent KL(p_t || p_s)
    let soft = |v: &[f32]| {
        let m = v.iter().cloned().fold(f32::MIN, f32::max);
        let e: Vec<f64> = v.iter().map(|x| ((x - m) as f64).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect::<Vec<f64>>()
    };
    let mut want = 0.0;
    for i in 0..2 {
        let (ps, pt) = (soft(s.sample(i)), soft(t.sample(i)));
        want += pt.iter().zip(&ps).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
    }
    assert!((kl - want / 2.0).abs() < 1e-5, "{kl} vs {}", want / 2.0);
}

#[test]
fn huge_temperature_flattens_softmax() {
    let p = softmax_t(&[10.0, -5.0, 3.0, 0.0], 1e6);
    assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-4));
}
