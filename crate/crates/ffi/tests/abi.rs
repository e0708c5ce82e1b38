// SPDX-License-Identifier: Apache-2.0

use std::ffi::{CStr, CString};
use std::ptr;

use riskprobe_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rp_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn applicability_masks() {
    let mut m = 0u32;
    let cells = [
        (RP_ACCESS_BLACK_BOX, RP_AUX_PARTIAL, RP_ATTACK_MEMINF | RP_ATTACK_MODSTEAL),
        (RP_ACCESS_BLACK_BOX, RP_AUX_SHADOW, RP_ATTACK_MEMINF | RP_ATTACK_MODSTEAL),
        (RP_ACCESS_WHITE_BOX, RP_AUX_PARTIAL, RP_ATTACK_MEMINF | RP_ATTACK_ATTRINF),
        (RP_ACCESS_WHITE_BOX, RP_AUX_SHADOW, RP_ATTACK_MEMINF | RP_ATTACK_ATTRINF | RP_ATTACK_MODINV),
        (RP_ACCESS_WHITE_BOX, RP_AUX_NONE, RP_ATTACK_MODINV),
    ];
    for (a, x, want) in cells {
        assert_eq!(unsafe { rp_applicable_attacks(a, x, &mut m) }, RpStatus::Ok);
        assert_eq!(m, want);
    }
    let s = unsafe { rp_applicable_attacks(RP_ACCESS_BLACK_BOX, RP_AUX_NONE, &mut m) };
    assert_eq!(s, RpStatus::ConfigError);
    assert!(last_error().contains("IllegalThreatModel"));
    assert_eq!(unsafe { rp_applicable_attacks(9, RP_AUX_NONE, &mut m) }, RpStatus::InvalidArgument);
}

#[test]
fn sigma_and_clip() {
    let mut s = 0.0;
    assert_eq!(unsafe { rp_zcdp_sigma_for_budget(1.0, 1e-5, 1000, &mut s) }, RpStatus::Ok);
    assert!((154.0..=156.0).contains(&s), "{s}");
    assert_eq!(unsafe { rp_gaussian_sigma_single(1.0, 1e-5, &mut s) }, RpStatus::Ok);
    assert!((s - (2.0 * (1.25e5f64).ln()).sqrt()).abs() < 1e-12);
    assert_eq!(unsafe { rp_zcdp_sigma_for_budget(-1.0, 1e-5, 10, &mut s) }, RpStatus::RuntimeError);
    assert!(!last_error().is_empty());

    let g = [3.0f32, 4.0];
    let mut out = [0.0f32; 2];
    assert_eq!(unsafe { rp_clip_gradient(g.as_ptr(), 2, 1.0, out.as_mut_ptr()) }, RpStatus::Ok);
    assert!((out[0] - 0.6).abs() < 1e-6 && (out[1] - 0.8).abs() < 1e-6);
    assert_eq!(unsafe { rp_clip_gradient(g.as_ptr(), 2, 0.0, out.as_mut_ptr()) }, RpStatus::InvalidArgument);
}

#[test]
fn metrics() {
    let mut v = 0.0;
    let scores = [0.9, 0.8, 0.3, 0.1];
    let labels = [1u8, 0, 1, 0];
    assert_eq!(unsafe { rp_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut v) }, RpStatus::Ok);
    assert_eq!(v, 0.75);
    let (x, y) = ([1.0, 2.0, 3.0], [2.0, 4.0, 7.0]);
    assert_eq!(unsafe { rp_pearson(x.as_ptr(), y.as_ptr(), 3, &mut v) }, RpStatus::Ok);
    assert!((v - 0.9933992677987828).abs() < 1e-12);
    let (a, b) = ([0u32, 1, 2, 3], [0u32, 1, 2, 0]);
    assert_eq!(unsafe { rp_agreement(a.as_ptr(), b.as_ptr(), 4, &mut v) }, RpStatus::Ok);
    assert_eq!(v, 0.75);
    assert_eq!(unsafe { rp_pearson(ptr::null(), y.as_ptr(), 3, &mut v) }, RpStatus::NullArgument);
}

#[test]
fn accountant_handle() {
    let mut acc = ptr::null_mut();
    assert_eq!(unsafe { rp_accountant_new(1e-5, &mut acc) }, RpStatus::Ok);
    let sigma = {
        let mut s = 0.0;
        unsafe { rp_zcdp_sigma_for_budget(1.0, 1e-5, 1000, &mut s) };
        s
    };
    for _ in 0..1000 {
        assert_eq!(unsafe { rp_accountant_record(acc, sigma, 1.0) }, RpStatus::Ok);
    }
    let (mut eps, mut rho, mut steps) = (0.0, 0.0, 0u64);
    unsafe {
        rp_accountant_epsilon(acc, &mut eps);
        rp_accountant_rho(acc, &mut rho);
        rp_accountant_steps(acc, &mut steps);
        rp_accountant_free(acc);
        rp_accountant_free(ptr::null_mut());
    }
    assert_eq!(steps, 1000);
    assert!((eps - 1.0).abs() < 1e-6, "{eps}");
    assert!((rho - 1000.0 / (2.0 * sigma * sigma)).abs() < 1e-12);
}

#[test]
fn assessment_rejects_illegal_pair_before_compute() {
    let yaml = CString::new(
        "dataset: {kind: synthetic, n: 64}\nattacks: [{attack: modinv, threat_model: bb_shadow}]\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut report = ptr::null_mut();
    let s = unsafe { rp_run_assessment(yaml.as_ptr(), out_dir.as_ptr(), &mut report) };
    assert_eq!(s, RpStatus::ConfigError);
    assert!(report.is_null());
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn assessment_round_trip() {
    let yaml = CString::new(
        "dataset: {kind: synthetic, n: 96, num_classes: 3, channels: 1}
model: {architecture: linear}
train: {epochs: 2, batch_size: 16, optimizer: sgd_momentum, lr_schedule: [{from_epoch: 0, lr: 0.01}],
        weight_decay: 0.0, momentum: 0.9, loss: cross_entropy, seed: 0}
attacks:
  - {attack: modsteal, threat_model: bb_shadow}
settings:
  modsteal:
    train: {epochs: 2, batch_size: 16, optimizer: sgd_momentum, lr_schedule: [{from_epoch: 0, lr: 0.01}],
            weight_decay: 0.0, momentum: 0.9, loss: mse_on_posteriors, seed: 0}
",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut report = ptr::null_mut();
    let s = unsafe { rp_run_assessment(yaml.as_ptr(), out_dir.as_ptr(), &mut report) };
    assert_eq!(s, RpStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(rp_report_json(report)) }.to_str().unwrap().to_owned();
    let path = unsafe { CStr::from_ptr(rp_report_path(report)) }.to_str().unwrap().to_owned();
    unsafe { rp_report_free(report) };
    assert_eq!(std::fs::read_to_string(path).unwrap(), json);
    assert!(json.contains("\"agreement\""));
}

#[test]
fn header_declares_every_export() {
    let h = include_str!("../include/riskprobe.h");
    for f in [
        "rp_last_error_message",
        "rp_applicable_attacks",
        "rp_zcdp_sigma_for_budget",
        "rp_clip_gradient",
        "rp_auc",
        "rp_accountant_new",
        "rp_accountant_free",
        "rp_run_assessment",
        "rp_report_json",
        "rp_report_free",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
}
