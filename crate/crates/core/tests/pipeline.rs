// SPDX-License-Identifier: Apache-2.0

use riskprobe::access::{AttackKind, ThreatModel};
use riskprobe::pipeline::{run_assessment, RunConfig};
use riskprobe::Error;

const TRAIN: &str = "{epochs: 2, batch_size: 16, optimizer: sgd_momentum, lr_schedule: [{from_epoch: 0, lr: 0.01}], \
                     weight_decay: 0.0, momentum: 0.9, loss: cross_entropy, seed: 0}";

fn config(body: &str) -> RunConfig {
    let text = format!(
        "dataset: {{kind: synthetic, n: 96, channels: 1, num_classes: 3, seed: 9}}\n\
         model: {{architecture: simple_cnn_small}}\n\
         train: {TRAIN}\n\
         seed: 3\n{body}"
    );
    RunConfig::from_yaml(&text).unwrap()
}

#[test]
fn repeats_aggregate_and_correlate() {
    let cfg = config(
        "attacks:
  - {attack: meminf, threat_model: bb_shadow}
  - {attack: modsteal, threat_model: bb_shadow}
settings:
  meminf: {train: {batch_size: 16, lr: 0.001, epochs: 3}}
  modsteal:
    train: {epochs: 2, batch_size: 16, optimizer: sgd_momentum, lr_schedule: [{from_epoch: 0, lr: 0.01}],
            weight_decay: 0.0, momentum: 0.9, loss: mse_on_posteriors, seed: 0}
repeats: 3
",
    );
    let dir = tempfile::tempdir().unwrap();
    let a = run_assessment(&cfg, dir.path()).unwrap();
    let r = &a.report;
    assert_eq!(r.targets.len(), 3);
    assert_eq!(r.test_acc.n_runs, 3);
    for res in &r.results {
        assert!(res.metrics.values().all(|m| m.n_runs == 3));
    }
    let c = r
        .correlations
        .iter()
        .find(|c| c.threat_model == ThreatModel::BB_SHADOW)
        .expect("bb_shadow correlation");
    assert_eq!((c.attack_a, c.attack_b), (AttackKind::MemInf, AttackKind::ModSteal));
    assert_eq!(c.n_points, 3);
    // distinct repeats use distinct seeds, hence distinct targets
    let hashes: std::collections::BTreeSet<_> = r.targets.iter().map(|t| &t.checkpoint_sha256).collect();
    assert_eq!(hashes.len(), 3);
    assert!(r.inputs.contains_key("config") && r.inputs.contains_key("dataset"));
    assert!(r.inputs.contains_key("run_2/split_manifest"));
}

#[test]
fn dpsgd_defense_writes_ledger_and_respects_budget() {
    let cfg = config(&format!(
        "attacks: [{{attack: meminf, threat_model: wb_partial}}]
settings: {{meminf: {{train: {{batch_size: 16, lr: 0.001, epochs: 2}}}}}}
defense: {{kind: dpsgd, epsilon: 2.0, clip: 1.0, train: {TRAIN}}}
"
    ));
    let dir = tempfile::tempdir().unwrap();
    let a = run_assessment(&cfg, dir.path()).unwrap();
    let t = &a.report.targets[0];
    assert_eq!(a.report.defense, "dpsgd");
    assert!(t.defense["epsilon"].0 <= 2.0);
    let ledger: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_0/dp_ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger.len() as f64, t.defense["steps"].0);
    assert!(ledger.iter().all(|e| e["noise_digest"].as_str().is_some_and(|d| d.len() == 16)));
}

#[test]
fn kd_defense_trains_a_smaller_student() {
    let mut cfg = config(
        "attacks: [{attack: meminf, threat_model: wb_partial}]
settings: {meminf: {train: {batch_size: 16, lr: 0.001, epochs: 2}}}
defense: {kind: kd}
",
    );
    cfg.model.architecture = "simple_cnn".into();
    let dir = tempfile::tempdir().unwrap();
    let a = run_assessment(&cfg, dir.path()).unwrap();
    assert_eq!(a.report.targets[0].architecture, "simple_cnn_small");
    assert!(dir.path().join("run_0/teacher/meta.json").exists());
    assert!(a.report.targets[0].defense.contains_key("teacher_test_acc"));
}

#[test]
fn white_box_attacks_run_end_to_end() {
    let cfg = config(
        "attacks:
  - {attack: attrinf, threat_model: wb_shadow}
  - {attack: modinv, threat_model: wb_shadow}
  - {attack: modinv, threat_model: wb_none}
  - {attack: meminf, threat_model: wb_shadow}
settings:
  meminf: {train: {batch_size: 16, lr: 0.001, epochs: 2}}
  attrinf: {train: {batch_size: 16, lr: 0.001, epochs: 2}}
  modinv:
    gradient: {max_iter: 20}
    gan: {epochs: 1, batch_size: 16}
    gan_inversion: {iterations: 3}
    samples_per_class: 2
    eval_classifier_epochs: 1
",
    );
    let dir = tempfile::tempdir().unwrap();
    let a = run_assessment(&cfg, dir.path()).unwrap();
    let find = |k: AttackKind, tm: ThreatModel| {
        a.report
            .results
            .iter()
            .find(|r| r.attack == k && r.threat_model == tm)
            .unwrap()
    };
    assert!(find(AttackKind::ModInv, ThreatModel::WB_NONE).metrics.contains_key("mse"));
    assert!(find(AttackKind::ModInv, ThreatModel::WB_SHADOW).metrics.contains_key("accuracy"));
    assert!(find(AttackKind::AttrInf, ThreatModel::WB_SHADOW).metrics.contains_key("macro_f1"));
    assert!(find(AttackKind::MemInf, ThreatModel::WB_SHADOW).metrics.contains_key("auc"));
    assert!(dir.path().join("run_0/modinv_wb_none_class0.png").exists());
    // three classes, three figures per inversion variant
    let pngs = std::fs::read_dir(dir.path().join("run_0"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 6);
}

#[test]
fn missing_attribute_is_rejected_before_training() {
    let mut cfg = config("attacks: [{attack: attrinf, threat_model: wb_partial}]\n");
    cfg.settings.attrinf.attribute = "eye_colour".into();
    let dir = tempfile::tempdir().unwrap();
    let err = run_assessment(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err.root(), Error::Config(_)), "{err}");
    assert!(!dir.path().join("run_0").exists());
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::from_yaml(&std::fs::read_to_string(&path).unwrap()).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}
