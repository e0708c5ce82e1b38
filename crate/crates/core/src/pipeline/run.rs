// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cache::TensorCache;
use super::config::{derive_seed, AttackPair, DefenseConfig, RunConfig};
use crate::access::{Access, AttackKind, Auxiliary, TargetModelHandle, ThreatModel};
use crate::attacks::{attrinf, meminf, modinv, modsteal};
use crate::data::{apply_split, partial_subset, quad_split_indices, DatasetManifest, LabeledImageDataset, QuadSplit};
use crate::defenses::{train_distilled, train_dpsgd, DistillConfig};
use crate::error::{Error, Result};
use crate::eval::plot::roc_csv;
use crate::eval::{build_report, RiskReport, RunRecord, TargetRecord};
use crate::nn::Tensor;
use crate::zoo::checkpoint::{self, sha256_hex};
use crate::zoo::{train_classifier, LossKind, Model, ModelSpec, TrainConfig};

/// Everything one repeat produced; persisted as `run_<i>/records.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatRecords {
    pub defense: String,
    pub inputs: BTreeMap<String, String>,
    pub target: TargetRecord,
    pub runs: Vec<RunRecord>,
}

#[derive(Clone, Debug)]
pub struct Assessment {
    pub report_path: PathBuf,
    pub report: RiskReport,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Loaded dataset plus the fan-out of seeds and paths for one repeat.
pub struct RepeatContext<'a> {
    pub cfg: &'a RunConfig,
    pub repeat: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub split: QuadSplit,
    pub manifest_hash: String,
    pub spec: ModelSpec,
    cache: TensorCache,
}

impl<'a> RepeatContext<'a> {
    /// Splits the dataset for `repeat` and writes the split manifest.
    pub fn new(cfg: &'a RunConfig, ds: &LabeledImageDataset, repeat: usize, out: &Path) -> Result<Self> {
        let seed = cfg.seed.wrapping_add(repeat as u64);
        let dir = out.join(format!("run_{repeat}"));
        let split_seed = derive_seed(seed, "split");
        let idx = stage("split", quad_split_indices(ds.labels(), ds.num_classes(), split_seed))?;
        let manifest = DatasetManifest::new(ds, idx.clone(), split_seed);
        let text = serde_json::to_string_pretty(&manifest)?;
        let manifest_hash = sha256_hex(text.as_bytes());
        write(&dir.join("split_manifest.json"), &text)?;
        Ok(RepeatContext {
            cfg,
            repeat,
            seed,
            split: apply_split(ds, &idx, split_seed),
            manifest_hash,
            spec: ModelSpec::new(cfg.model.architecture.clone(), ds.num_classes(), ds.channels()),
            cache: TensorCache::new(out.join("cache")),
            dir,
        })
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    fn cache_key(&self, role: &str, extra: &impl Serialize) -> Result<String> {
        let json = serde_json::to_string(&(
            role,
            &self.cfg.dataset,
            &self.cfg.model,
            &self.cfg.train,
            extra,
            self.seed,
            &self.manifest_hash,
        ))?;
        Ok(sha256_hex(json.as_bytes()))
    }

    /// Loads the checkpoint under `name` when its cache key matches,
    /// otherwise trains it with `train` and saves it.
    fn cached_model(
        &self,
        name: &str,
        key: &str,
        recipe: Option<&TrainConfig>,
        train: impl FnOnce() -> Result<(Model, BTreeMap<String, String>)>,
    ) -> Result<(Model, BTreeMap<String, String>)> {
        let dir = self.dir.join(name);
        if let Ok((m, meta)) = checkpoint::load(&dir) {
            if meta.provenance.get("cache_key").map(String::as_str) == Some(key) {
                log::info!("run {}: reusing cached {name}", self.repeat);
                return Ok((m, meta.provenance));
            }
        }
        log::info!("run {}: training {name}", self.repeat);
        let (model, mut prov) = train()?;
        prov.insert("cache_key".into(), key.into());
        checkpoint::save(&dir, &model, Access::WhiteBox, recipe, Some(&self.manifest_hash), prov.clone())?;
        Ok((model, prov))
    }

    fn recipe(&self, label: &str) -> TrainConfig {
        self.cfg.train.clone().with_seed(self.seed_for(label))
    }

    /// Target model, trained with the configured defense.
    pub fn target(&self) -> Result<(Model, BTreeMap<String, f64>)> {
        let s = &self.split;
        let key = self.cache_key("target", &self.cfg.defense)?;
        let (model, prov) = match &self.cfg.defense {
            DefenseConfig::None => {
                let cfg = self.recipe("target");
                self.cached_model("target", &key, Some(&cfg), || {
                    let t = stage("train target", train_classifier(&self.spec, &s.target_train, &s.target_test, &cfg))?;
                    Ok((t.model, BTreeMap::new()))
                })?
            }
            DefenseConfig::Dpsgd { .. } => {
                let budget = self.cfg.defense.dp_budget().expect("dpsgd defense");
                let cfg = self
                    .cfg
                    .defense
                    .train()
                    .cloned()
                    .unwrap_or_else(|| self.cfg.train.clone())
                    .with_seed(self.seed_for("target"));
                self.cached_model("target", &key, Some(&cfg), || {
                    let r = stage(
                        "train target with DP-SGD",
                        train_dpsgd(&self.spec, &s.target_train, &s.target_test, &cfg, &budget),
                    )?;
                    write(
                        &self.dir.join("dp_ledger.json"),
                        serde_json::to_string_pretty(r.accountant.ledger())?,
                    )?;
                    let mut prov = BTreeMap::new();
                    prov.insert("dp_spent".into(), serde_json::to_string(&r.spent)?);
                    Ok((r.trained.model, prov))
                })?
            }
            DefenseConfig::Kd { .. } => {
                let dcfg = self.cfg.defense.distill().expect("kd defense");
                let teacher_cfg = self.recipe("teacher");
                let tkey = self.cache_key("teacher", &())?;
                let (teacher, _) = self.cached_model("teacher", &tkey, Some(&teacher_cfg), || {
                    let t = stage(
                        "train teacher",
                        train_classifier(&self.spec, &s.target_train, &s.target_test, &teacher_cfg),
                    )?;
                    Ok((t.model, BTreeMap::new()))
                })?;
                let mut cfg = self
                    .cfg
                    .defense
                    .train()
                    .cloned()
                    .unwrap_or_else(|| DistillConfig::student_recipe().with_epochs(self.cfg.train.epochs))
                    .with_seed(self.seed_for("target"));
                cfg.loss = LossKind::Distill;
                let student = ModelSpec {
                    architecture: dcfg.student_architecture.clone(),
                    ..self.spec.clone()
                };
                let (m, mut prov) = self.cached_model("target", &key, Some(&cfg), || {
                    let t = stage(
                        "distill target",
                        train_distilled(&teacher, &student, &s.target_train, &s.target_test, &cfg, &dcfg),
                    )?;
                    Ok((t.model, BTreeMap::new()))
                })?;
                let acc = |d: &LabeledImageDataset| teacher.accuracy(&d.images(), d.labels());
                prov.insert("teacher_train_acc".into(), acc(&s.target_train)?.to_string());
                prov.insert("teacher_test_acc".into(), acc(&s.target_test)?.to_string());
                (m, prov)
            }
        };
        let mut defense = BTreeMap::new();
        if let Some(spent) = prov.get("dp_spent") {
            let spent: crate::defenses::SpentBudget = serde_json::from_str(spent)?;
            defense.insert("epsilon".into(), spent.epsilon);
            defense.insert("delta".into(), spent.delta);
            defense.insert("sigma".into(), spent.sigma);
            defense.insert("clip".into(), spent.clip);
            defense.insert("steps".into(), spent.steps as f64);
            defense.insert("budget_exhausted".into(), if spent.exhausted { 1.0 } else { 0.0 });
        }
        for k in ["teacher_train_acc", "teacher_test_acc"] {
            if let Some(v) = prov.get(k).and_then(|v| v.parse().ok()) {
                defense.insert(k.into(), v);
            }
        }
        Ok((model, defense))
    }

    /// Shadow model: the target recipe (without any defense) on shadow data.
    pub fn shadow(&self) -> Result<Model> {
        let cfg = self.recipe("shadow");
        let key = self.cache_key("shadow", &())?;
        let s = &self.split;
        Ok(self
            .cached_model("shadow", &key, Some(&cfg), || {
                let t = stage("train shadow", train_classifier(&self.spec, &s.shadow_train, &s.shadow_test, &cfg))?;
                Ok((t.model, BTreeMap::new()))
            })?
            .0)
    }

    fn partial(&self) -> Result<LabeledImageDataset> {
        partial_subset(&self.split, self.cfg.settings.partial_fraction, self.seed_for("partial"))
    }

    fn artifact(&self, name: &str) -> (PathBuf, String) {
        (self.dir.join(name), format!("run_{}/{}", self.repeat, name))
    }
}

/// Runs one attack under one threat model against the target.
pub fn run_attack(
    ctx: &RepeatContext<'_>,
    target: &Arc<Model>,
    shadow: Option<&Arc<Model>>,
    pair: AttackPair,
) -> Result<RunRecord> {
    let AttackPair { attack, threat_model: tm } = pair;
    crate::access::check_applicable(attack, tm)?;
    let handle = TargetModelHandle::from_shared(Arc::clone(target), tm.access());
    let target_hash = target.content_hash();
    let seed = ctx.seed_for(&format!("attack/{}/{}", attack.id(), tm.id()));
    let label = format!("{} {}", attack.id(), tm.id());
    let (metrics, artifacts) = stage(
        &label,
        match attack {
            AttackKind::MemInf => run_meminf(ctx, &handle, &target_hash, shadow, tm, seed),
            AttackKind::AttrInf => run_attrinf(ctx, &handle, &target_hash, tm, seed),
            AttackKind::ModSteal => run_modsteal(ctx, &handle, &target_hash, tm, seed),
            AttackKind::ModInv => run_modinv(ctx, &handle, tm, seed),
        },
    )?;
    Ok(RunRecord {
        repeat: ctx.repeat,
        attack,
        threat_model: tm,
        metrics,
        artifacts,
    })
}

type Outcome = (BTreeMap<String, f64>, Vec<String>);

fn cached_features(
    ctx: &RepeatContext<'_>,
    model_hash: &str,
    handle: &TargetModelHandle,
    members: &LabeledImageDataset,
    non_members: &LabeledImageDataset,
    mode: meminf::FeatureMode,
    seed: u64,
) -> Result<meminf::MembershipFeatures> {
    let mode_id = format!("{mode:?}");
    let seed_s = seed.to_string();
    let (mh, nh) = (members.content_hash(), non_members.content_hash());
    let mut membership = Vec::new();
    let (features, widths) = ctx.cache.get_or_compute(
        &["meminf", model_hash, &mh, &nh, &mode_id, &seed_s],
        || {
            let f = meminf::balanced_features(handle, members, non_members, mode, seed)?;
            Ok((f.features, f.widths))
        },
    )?;
    let n = features.batch() / 2;
    membership.extend(std::iter::repeat_n(1, n));
    membership.extend(std::iter::repeat_n(0, n));
    Ok(meminf::MembershipFeatures {
        mode,
        features,
        widths,
        membership,
    })
}

fn run_meminf(
    ctx: &RepeatContext<'_>,
    target: &TargetModelHandle,
    target_hash: &str,
    shadow: Option<&Arc<Model>>,
    tm: ThreatModel,
    seed: u64,
) -> Result<Outcome> {
    let s = &ctx.split;
    let mode = meminf::FeatureMode::for_access(tm.access());
    let (trainset, evalset) = match tm.auxiliary() {
        Auxiliary::Shadow => {
            let shadow = shadow.ok_or_else(|| Error::Config("shadow model missing".into()))?;
            let sh = TargetModelHandle::from_shared(Arc::clone(shadow), tm.access());
            let trainset = cached_features(ctx, &shadow.content_hash(), &sh, &s.shadow_train, &s.shadow_test, mode, seed)?;
            let evalset = cached_features(ctx, target_hash, target, &s.target_train, &s.target_test, mode, seed ^ 1)?;
            (trainset, evalset)
        }
        Auxiliary::Partial => {
            let partial = ctx.partial()?;
            let (a, b) = meminf::split_nonmember_pool(s.target_test.len(), seed);
            let pool = s.target_test.subset(&a);
            let known: std::collections::BTreeSet<usize> = partial.ids().iter().copied().collect();
            let rest: Vec<usize> = (0..s.target_train.len())
                .filter(|&i| !known.contains(&s.target_train.ids()[i]))
                .collect();
            if rest.is_empty() {
                return Err(Error::DatasetTooSmall { needed: 1, got: 0 });
            }
            meminf::trainset_from_partial(target, &partial, &pool, mode, seed)?;
            let trainset = cached_features(ctx, target_hash, target, &partial, &pool, mode, seed)?;
            let evalset = cached_features(
                ctx,
                target_hash,
                target,
                &s.target_train.subset(&rest),
                &s.target_test.subset(&b),
                mode,
                seed ^ 1,
            )?;
            (trainset, evalset)
        }
        Auxiliary::None => unreachable!("rejected by check_applicable"),
    };
    let attack = meminf::train_attack(&trainset, &ctx.cfg.settings.meminf.train, seed)?;
    let ev = meminf::evaluate(&attack, &evalset)?;
    let (path, rel) = ctx.artifact(&format!("meminf_{}_roc.csv", tm.id()));
    write(&path, roc_csv(&ev.roc))?;
    let mut m = BTreeMap::new();
    m.insert("accuracy".into(), ev.accuracy);
    m.insert("f1".into(), ev.f1);
    m.insert("auc".into(), ev.auc);
    m.insert("n_eval".into(), ev.n as f64);
    Ok((m, vec![rel]))
}

fn aux_for(ctx: &RepeatContext<'_>, tm: ThreatModel) -> Result<LabeledImageDataset> {
    match tm.auxiliary() {
        Auxiliary::Shadow => Ok(ctx.split.shadow_train.clone()),
        Auxiliary::Partial => ctx.partial(),
        Auxiliary::None => Err(Error::Config(format!("{} has no auxiliary data", tm.id()))),
    }
}

fn attribute_labels(ds: &LabeledImageDataset, name: &str) -> Result<Vec<usize>> {
    ds.attribute(name)
        .map(<[usize]>::to_vec)
        .ok_or_else(|| Error::Config(format!("dataset has no attribute {name:?}")))
}

fn run_attrinf(
    ctx: &RepeatContext<'_>,
    target: &TargetModelHandle,
    model_hash: &str,
    tm: ThreatModel, seed: u64) -> Result<Outcome> {
    let settings = &ctx.cfg.settings.attrinf;
    let aux = aux_for(ctx, tm)?;
    let test = &ctx.split.target_test;
    let model = target.model()?;
    let layer = model.embedding_layer().to_string();
    let embed = |ds: &LabeledImageDataset| -> Result<Tensor> {
        Ok(ctx
            .cache
            .get_or_compute(&["embedding", model_hash, &ds.content_hash(), &layer], || {
                Ok((attrinf::extract_embeddings(target, &ds.images(), None)?, Vec::new()))
            })?
            .0)
    };
    let y_aux = attribute_labels(&aux, &settings.attribute)?;
    let y_test = attribute_labels(test, &settings.attribute)?;
    let num_values = y_aux.iter().chain(&y_test).max().copied().unwrap_or(0) + 1;
    let attack = attrinf::train_attrinf(&embed(&aux)?, &y_aux, num_values.max(2), &settings.train, seed)?;
    let p = attack.model.posteriors(&embed(test)?)?;
    let pred: Vec<usize> = p.rows().map(crate::zoo::argmax).collect();
    let mut m = BTreeMap::new();
    m.insert("accuracy".into(), crate::eval::metrics::accuracy(&pred, &y_test)?);
    m.insert(
        "macro_f1".into(),
        crate::eval::metrics::macro_f1(&pred, &y_test, attack.num_values)?,
    );
    if attack.num_values == 2 {
        m.insert("f1".into(), crate::eval::metrics::f1_binary(&pred, &y_test)?);
    }
    Ok((m, Vec::new()))
}

fn run_modsteal(
    ctx: &RepeatContext<'_>,
    target: &TargetModelHandle,
    target_hash: &str,
    tm: ThreatModel, seed: u64) -> Result<Outcome> {
    let aux = aux_for(ctx, tm)?;
    let cfg = ctx.cfg.settings.modsteal.train.clone().with_seed(seed);
    let stolen = modsteal::steal_model(target, &aux, &cfg)?;
    let test = &ctx.split.target_test;
    let agreement = modsteal::agreement(&stolen.model, target, &test.images())?;
    let mut prov = stolen.provenance.clone();
    prov.insert("target_sha256".into(), target_hash.to_string());
    let (dir, rel) = ctx.artifact(&format!("stolen_{}", tm.id()));
    checkpoint::save(&dir, &stolen.model, Access::WhiteBox, Some(&cfg), Some(&ctx.manifest_hash), prov)?;
    let mut m = BTreeMap::new();
    m.insert("agreement".into(), agreement);
    m.insert("stolen_test_acc".into(), stolen.model.accuracy(&test.images(), test.labels())?);
    Ok((m, vec![rel]))
}

fn run_modinv(ctx: &RepeatContext<'_>, target: &TargetModelHandle, tm: ThreatModel, seed: u64) -> Result<Outcome> {
    let settings = &ctx.cfg.settings.modinv;
    let k = target.num_classes();
    let norm = ctx.split.target_train.normalization().clone();
    let mut m = BTreeMap::new();
    let mut artifacts = Vec::new();
    match tm.auxiliary() {
        Auxiliary::None => {
            let mut recs = Vec::new();
            let (mut post, mut iters) = (0.0, 0.0);
            for c in 0..k {
                let inv = modinv::invert_class(target, c, &settings.gradient)?;
                post += inv.final_posterior;
                iters += inv.iterations as f64;
                let (path, rel) = ctx.artifact(&format!("modinv_{}_class{c}.png", tm.id()));
                write_png(&path, &norm.denormalize(&inv.image), target.input_shape())?;
                artifacts.push(rel);
                recs.push((c, inv.image));
            }
            let (mse, _) = modinv::eval_inversion_mse(&recs, &ctx.split.target_train)?;
            m.insert("mse".into(), mse);
            m.insert("mean_final_posterior".into(), post / k as f64);
            m.insert("mean_iterations".into(), iters / k as f64);
        }
        Auxiliary::Shadow => {
            let s = &ctx.split;
            let (gan, scale) = modinv::train_gan(&s.shadow_train, &settings.gan, seed)?;
            let mut eval_cfg = ctx.recipe("eval_classifier");
            if let Some(e) = settings.eval_classifier_epochs {
                eval_cfg.epochs = e;
            }
            let key = ctx.cache_key("eval_classifier", &settings.eval_classifier_epochs)?;
            let eval_train = s.shadow_train.concat(&s.shadow_test)?;
            let (eval_model, _) = ctx.cached_model("eval_classifier", &key, Some(&eval_cfg), || {
                let t = train_classifier(&ctx.spec, &eval_train, &s.target_test, &eval_cfg)?;
                Ok((t.model, BTreeMap::new()))
            })?;
            let n = settings.samples_per_class;
            let mut images = Vec::with_capacity(k * n);
            let mut intended = Vec::with_capacity(k * n);
            let (mut p0, mut p1) = (0.0, 0.0);
            for c in 0..k {
                let inv = modinv::gan_invert_class(target, &gan, scale, c, n, &settings.gan_inversion, seed ^ c as u64)?;
                p0 += inv.initial_posteriors.iter().sum::<f64>();
                p1 += inv.final_posteriors.iter().sum::<f64>();
                let (path, rel) = ctx.artifact(&format!("modinv_{}_class{c}.png", tm.id()));
                write_png(&path, &norm.denormalize(inv.images.sample(0)), target.input_shape())?;
                artifacts.push(rel);
                images.extend_from_slice(inv.images.data());
                intended.extend(std::iter::repeat_n(c, n));
            }
            let mut shape = vec![k * n];
            shape.extend_from_slice(target.input_shape());
            let recon = Tensor::new(shape, images)?;
            let (acc, f1) = modinv::eval_inversion_accuracy(&recon, &intended, &eval_model)?;
            m.insert("accuracy".into(), acc);
            m.insert("macro_f1".into(), f1);
            m.insert("mean_initial_posterior".into(), p0 / (k * n) as f64);
            m.insert("mean_final_posterior".into(), p1 / (k * n) as f64);
        }
        Auxiliary::Partial => unreachable!("rejected by check_applicable"),
    }
    Ok((m, artifacts))
}

/// Writes a CHW float image as PNG, min-max scaled to 0..255.
pub fn write_png(path: &Path, chw: &[f32], shape: &[usize]) -> Result<()> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (lo, hi) = chw.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |ch: usize, y: usize, x: usize| (((chw[ch * h * w + y * w + x] - lo) / span) * 255.0).round() as u8;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let res = if c >= 3 {
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([px(0, y, x), px(1, y, x), px(2, y, x)])
        })
        .save(path)
    } else {
        image::GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([px(0, y as usize, x as usize)])).save(path)
    };
    res.map_err(|e| Error::Image(e.to_string()))
}

/// Trains (or loads) the target for one repeat and runs every configured attack.
pub fn run_repeat(cfg: &RunConfig, ds: &LabeledImageDataset, repeat: usize, out: &Path) -> Result<RepeatRecords> {
    let ctx = RepeatContext::new(cfg, ds, repeat, out)?;
    let (target, defense) = ctx.target()?;
    let target = Arc::new(target);
    let needs_shadow = cfg
        .attacks
        .iter()
        .any(|p| p.attack == AttackKind::MemInf && p.threat_model.auxiliary() == Auxiliary::Shadow);
    let shadow = if needs_shadow { Some(Arc::new(ctx.shadow()?)) } else { None };
    let mut runs = Vec::new();
    for pair in &cfg.attacks {
        log::info!("run {repeat}: {} under {}", pair.attack, pair.threat_model);
        runs.push(run_attack(&ctx, &target, shadow.as_ref(), *pair)?);
    }
    let s = &ctx.split;
    let mut inputs = BTreeMap::new();
    inputs.insert(format!("run_{repeat}/split_manifest"), ctx.manifest_hash.clone());
    inputs.insert(format!("run_{repeat}/target"), target.content_hash());
    if let Some(sh) = &shadow {
        inputs.insert(format!("run_{repeat}/shadow"), sh.content_hash());
    }
    let records = RepeatRecords {
        defense: cfg.defense.id().into(),
        inputs,
        target: TargetRecord {
            repeat,
            architecture: target.architecture_id().into(),
            checkpoint_sha256: target.content_hash(),
            train_acc: target.accuracy(&s.target_train.images(), s.target_train.labels())?,
            test_acc: target.accuracy(&s.target_test.images(), s.target_test.labels())?,
            defense,
        },
        runs,
    };
    write(&ctx.dir.join("records.json"), serde_json::to_string_pretty(&records)?)?;
    Ok(records)
}

/// Checks everything that can be checked before training starts.
pub fn preflight(cfg: &RunConfig, ds: &LabeledImageDataset) -> Result<()> {
    cfg.validate()?;
    if cfg.needs(AttackKind::AttrInf) && ds.attribute(&cfg.settings.attrinf.attribute).is_none() {
        return Err(Error::Config(format!(
            "attrinf needs attribute {:?}, dataset has {:?}",
            cfg.settings.attrinf.attribute,
            ds.attribute_names()
        )));
    }
    if ds.len() < 8 {
        return Err(Error::DatasetTooSmall { needed: 8, got: ds.len() });
    }
    Ok(())
}

/// Full pipeline: every repeat, then the aggregated report under `out`.
pub fn run_assessment(cfg: &RunConfig, out: &Path) -> Result<Assessment> {
    cfg.validate()?;
    let ds = stage("load dataset", cfg.dataset.load())?;
    preflight(cfg, &ds)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let mut all = Vec::new();
    for repeat in 0..cfg.repeats {
        all.push(run_repeat(cfg, &ds, repeat, out)?);
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("config".to_string(), cfg.content_hash());
    inputs.insert("dataset".to_string(), ds.content_hash());
    write_report(out, inputs, &all)
}

/// Builds and writes `report.json`, `metrics.csv` and `correlations.csv`.
pub fn write_report(out: &Path, mut inputs: BTreeMap<String, String>, repeats: &[RepeatRecords]) -> Result<Assessment> {
    let first = repeats.first().ok_or(Error::EmptyDataset)?;
    let mut targets = Vec::new();
    let mut runs = Vec::new();
    for r in repeats {
        inputs.extend(r.inputs.clone());
        targets.push(r.target.clone());
        runs.extend(r.runs.iter().cloned());
    }
    let report = build_report(inputs, &first.defense, &targets, &runs)?;
    let report_path = out.join("report.json");
    write(&report_path, report.to_json()?)?;
    write(&out.join("metrics.csv"), report.metrics_csv())?;
    write(&out.join("correlations.csv"), report.correlations_csv())?;
    Ok(Assessment { report_path, report })
}

/// Rebuilds the report from the per-repeat records under `out`.
pub fn rebuild_report(out: &Path) -> Result<Assessment> {
    let cfg_path = out.join("config.json");
    let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg: RunConfig = serde_json::from_str(&cfg_text)?;
    let mut repeats = Vec::new();
    for i in 0..cfg.repeats {
        let p = out.join(format!("run_{i}")).join("records.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        repeats.push(serde_json::from_str::<RepeatRecords>(&text)?);
    }
    let ds = cfg.dataset.load()?;
    let mut inputs = BTreeMap::new();
    inputs.insert("config".to_string(), cfg.content_hash());
    inputs.insert("dataset".to_string(), ds.content_hash());
    write_report(out, inputs, &repeats)
}
