// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::access::{check_applicable, AttackKind, ThreatModel};
use crate::attacks::modinv::{GanInversionConfig, GanTrainConfig, InversionConfig};
use crate::attacks::modsteal::default_steal_config;
use crate::attacks::AttackTrainConfig;
use crate::data::{DatasetSource, PARTIAL_FRACTION};
use crate::defenses::{DistillConfig, DpSgdConfig};
use crate::error::{Error, Result};
use crate::zoo::{Architectures, LossKind, TrainConfig, SIMPLE_CNN, SIMPLE_CNN_SMALL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: SIMPLE_CNN.into(),
        }
    }
}

/// One attack to run under one threat model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPair {
    pub attack: AttackKind,
    pub threat_model: ThreatModel,
}

fn default_delta() -> f64 {
    1e-5
}

fn default_clip() -> f32 {
    1.0
}

fn default_temperature() -> f32 {
    20.0
}

fn default_alpha() -> f32 {
    0.7
}

fn default_student() -> String {
    SIMPLE_CNN_SMALL.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum DefenseConfig {
    #[default]
    None,
    Dpsgd {
        epsilon: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_clip")]
        clip: f32,
        /// Noise multiplier; derived from the budget when absent.
        #[serde(default)]
        sigma: Option<f64>,
        /// Recipe for the private model; defaults to the target recipe.
        #[serde(default)]
        train: Option<TrainConfig>,
    },
    Kd {
        #[serde(default = "default_temperature")]
        temperature: f32,
        #[serde(default = "default_alpha")]
        alpha: f32,
        #[serde(default = "default_student")]
        student_architecture: String,
        /// Recipe for the student; defaults to the distillation recipe run for the target's epochs.
        #[serde(default)]
        train: Option<TrainConfig>,
    },
}


impl DefenseConfig {
    pub fn id(&self) -> &'static str {
        match self {
            DefenseConfig::None => "none",
            DefenseConfig::Dpsgd { .. } => "dpsgd",
            DefenseConfig::Kd { .. } => "kd",
        }
    }

    pub fn dp_budget(&self) -> Option<DpSgdConfig> {
        match self {
            DefenseConfig::Dpsgd {
                epsilon,
                delta,
                clip,
                sigma,
                ..
            } => Some(DpSgdConfig {
                epsilon: *epsilon,
                delta: *delta,
                clip: *clip,
                sigma: *sigma,
            }),
            _ => None,
        }
    }

    pub fn distill(&self) -> Option<DistillConfig> {
        match self {
            DefenseConfig::Kd {
                temperature,
                alpha,
                student_architecture,
                ..
            } => Some(DistillConfig {
                temperature: *temperature,
                alpha: *alpha,
                student_architecture: student_architecture.clone(),
            }),
            _ => None,
        }
    }

    /// Recipe override for the defended model, if any.
    pub fn train(&self) -> Option<&TrainConfig> {
        match self {
            DefenseConfig::None => None,
            DefenseConfig::Dpsgd { train, .. } | DefenseConfig::Kd { train, .. } => train.as_ref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemInfSettings {
    pub train: AttackTrainConfig,
}

impl Default for MemInfSettings {
    fn default() -> Self {
        MemInfSettings {
            train: AttackTrainConfig {
                batch_size: 64,
                lr: 1e-5,
                epochs: 50,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttrInfSettings {
    pub train: AttackTrainConfig,
    /// Dataset attribute to infer.
    pub attribute: String,
}

impl Default for AttrInfSettings {
    fn default() -> Self {
        AttrInfSettings {
            train: AttackTrainConfig {
                batch_size: 64,
                lr: 1e-3,
                epochs: 50,
            },
            attribute: "attr0".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModStealSettings {
    pub train: TrainConfig,
}

impl Default for ModStealSettings {
    fn default() -> Self {
        ModStealSettings {
            train: default_steal_config(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModInvSettings {
    pub gradient: InversionConfig,
    pub gan: GanTrainConfig,
    pub gan_inversion: GanInversionConfig,
    /// Latent starts per class for the GAN variant.
    pub samples_per_class: usize,
    /// Epochs for the independent evaluation classifier (target recipe otherwise).
    pub eval_classifier_epochs: Option<usize>,
}

impl Default for ModInvSettings {
    fn default() -> Self {
        ModInvSettings {
            gradient: InversionConfig::default(),
            gan: GanTrainConfig::default(),
            gan_inversion: GanInversionConfig::default(),
            samples_per_class: 10,
            eval_classifier_epochs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSettings {
    pub partial_fraction: f64,
    pub meminf: MemInfSettings,
    pub attrinf: AttrInfSettings,
    pub modsteal: ModStealSettings,
    pub modinv: ModInvSettings,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            partial_fraction: PARTIAL_FRACTION,
            meminf: MemInfSettings::default(),
            attrinf: AttrInfSettings::default(),
            modsteal: ModStealSettings::default(),
            modinv: ModInvSettings::default(),
        }
    }
}

fn default_repeats() -> usize {
    1
}

/// Everything one assessment needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelConfig,
    /// Target (and shadow) recipe; its `seed` is replaced per repeat.
    #[serde(default = "TrainConfig::standard_recipe")]
    pub train: TrainConfig,
    pub attacks: Vec<AttackPair>,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default)]
    pub settings: AttackSettings,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; a `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_yaml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&text)
    }

    /// Full validation; nothing is trained until this passes.
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("no attacks selected".into()));
        }
        for p in &self.attacks {
            check_applicable(p.attack, p.threat_model)?;
        }
        let mut seen = self.attacks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.attacks.len() {
            return Err(Error::Config("duplicate (attack, threat model) pair".into()));
        }
        let archs = Architectures::builtin();
        if !archs.names().any(|n| n == self.model.architecture) {
            return Err(Error::UnknownArchitecture(self.model.architecture.clone()));
        }
        self.train.validate()?;
        if self.train.loss != LossKind::CrossEntropy {
            return Err(Error::Config("target recipe must use cross_entropy".into()));
        }
        let s = &self.settings;
        if !(s.partial_fraction > 0.0 && s.partial_fraction <= 1.0) {
            return Err(Error::InvalidFraction(s.partial_fraction));
        }
        s.meminf.train.validate()?;
        s.attrinf.train.validate()?;
        s.modsteal.train.validate()?;
        if s.modsteal.train.loss != LossKind::MseOnPosteriors {
            return Err(Error::Config("model stealing must use mse_on_posteriors".into()));
        }
        if s.modinv.samples_per_class == 0 {
            return Err(Error::Config("modinv.samples_per_class must be at least 1".into()));
        }
        if let Some(budget) = self.defense.dp_budget() {
            budget.validate()?;
            if let Some(t) = self.defense.train() {
                t.validate()?;
                if t.loss != LossKind::CrossEntropy {
                    return Err(Error::Config("DP-SGD recipe must use cross_entropy".into()));
                }
            }
        }
        if let Some(distill) = self.defense.distill() {
            distill.validate()?;
            if !archs.names().any(|n| n == distill.student_architecture) {
                return Err(Error::UnknownArchitecture(distill.student_architecture.clone()));
            }
            if let Some(t) = self.defense.train() {
                t.validate()?;
                if t.loss != LossKind::Distill {
                    return Err(Error::Config("distillation recipe must use the distill loss".into()));
                }
            }
        }
        Ok(())
    }

    /// Hash of the configuration content, independent of where output goes.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }

    pub fn needs(&self, attack: AttackKind) -> bool {
        self.attacks.iter().any(|p| p.attack == attack)
    }
}

/// Deterministic child seed: the first eight bytes of SHA-256 over
/// `"{seed}/{label}"`, little-endian.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}/{label}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "dataset: {kind: synthetic}\nattacks:\n  - {attack: meminf, threat_model: bb_shadow}\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_yaml(MINIMAL).unwrap();
        assert_eq!(c.repeats, 1);
        assert_eq!(c.train, TrainConfig::standard_recipe());
        assert_eq!(c.settings.meminf.train.lr, 1e-5);
        assert_eq!(c.defense, DefenseConfig::None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}repeatz: 3\n");
        assert!(matches!(RunConfig::from_yaml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn illegal_pair_is_rejected() {
        let text = "dataset: {kind: synthetic}\nattacks:\n  - {attack: modinv, threat_model: bb_shadow}\n";
        assert!(matches!(
            RunConfig::from_yaml(text),
            Err(Error::InapplicableAttack { .. })
        ));
    }

    #[test]
    fn defense_variants_parse() {
        let text = format!("{MINIMAL}defense: {{kind: dpsgd, epsilon: 8, delta: 1.0e-5, clip: 1.0}}\n");
        let c = RunConfig::from_yaml(&text).unwrap();
        assert_eq!(c.defense.id(), "dpsgd");
        let text = format!("{MINIMAL}defense: {{kind: kd, temperature: 10}}\n");
        let c = RunConfig::from_yaml(&text).unwrap();
        let d = c.defense.distill().unwrap();
        assert_eq!((d.temperature, d.alpha), (10.0, 0.7));
    }

    #[test]
    fn seeds_are_labelled() {
        assert_eq!(derive_seed(1, "split"), derive_seed(1, "split"));
        assert_ne!(derive_seed(1, "split"), derive_seed(1, "target"));
        assert_ne!(derive_seed(1, "split"), derive_seed(2, "split"));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut c = RunConfig::from_yaml(MINIMAL).unwrap();
        let h = c.content_hash();
        c.output_dir = Some("/elsewhere".into());
        assert_eq!(h, c.content_hash());
    }
}
