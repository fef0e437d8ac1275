//! Run configuration, read from JSON. Every field is optional; unknown keys
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surrogate_core::degrade::DegradationKind;
use surrogate_core::models::Arch;
use surrogate_core::train::{AdamConfig, Stage, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Generator architecture, e.g. `sr_small` or `dm_net:features=16`.
    pub arch: String,
    pub degradation: DegradationSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: "sr_small".into(),
            degradation: DegradationSection::default(),
            train: TrainSection::default(),
            data: DataSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationSection {
    /// Applied to clean training images when the manifest has no
    /// `synthetic` inputs for stage 1.
    pub synthetic: String,
}

impl Default for DegradationSection {
    fn default() -> Self {
        DegradationSection {
            synthetic: "bicubic4".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub master_seed: u64,
    pub discriminator: String,
    pub adam: AdamSection,
    pub stage1: Stage1Section,
    pub stage2: Stage2Section,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            master_seed: 0,
            discriminator: "discriminator".into(),
            adam: AdamSection::default(),
            stage1: Stage1Section::default(),
            stage2: Stage2Section::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSection {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        AdamSection {
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Section {
    pub lr: f64,
    pub batch: usize,
    pub iterations: usize,
    pub log_every: usize,
}

impl Default for Stage1Section {
    fn default() -> Self {
        let c = TrainConfig::stage_one();
        Stage1Section {
            lr: c.lr,
            batch: c.batch,
            iterations: c.iterations,
            log_every: c.log_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Section {
    pub lr: f64,
    pub batch: usize,
    pub iterations: usize,
    pub log_every: usize,
    pub lambda_adv: f64,
    pub gan_k: usize,
}

impl Default for Stage2Section {
    fn default() -> Self {
        let c = TrainConfig::stage_two();
        Stage2Section {
            lr: c.lr,
            batch: c.batch,
            iterations: c.iterations,
            log_every: c.log_every,
            lambda_adv: c.lambda_adv,
            gan_k: c.gan_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset manifest; relative to the config file.
    pub manifest: PathBuf,
    /// Report `psnr_val` on the manifest's `val` split (real inputs against
    /// clean images) when it has one.
    pub validation: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            manifest: "manifest.tsv".into(),
            validation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Output tree root; relative to the config file.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data.manifest = base.join(&cfg.data.manifest);
        cfg.output.dir = base.join(&cfg.output.dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn arch(&self) -> Result<Arch> {
        let arch: Arch = self.arch.parse().map_err(|e| Error::Config(format!("arch: {e}")))?;
        if matches!(arch, Arch::Discriminator { .. } | Arch::Custom) {
            return Err(Error::Config(format!("arch: `{arch}` is not a generator")));
        }
        Ok(arch)
    }

    pub fn synthetic_degradation(&self) -> Result<DegradationKind> {
        self.degradation
            .synthetic
            .parse()
            .map_err(|e| Error::Config(format!("degradation.synthetic: {e}")))
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.train.adam.beta1,
            beta2: self.train.adam.beta2,
            eps: self.train.adam.eps,
        }
    }

    fn discriminator(&self) -> Result<Arch> {
        self.train
            .discriminator
            .parse()
            .map_err(|e| Error::Config(format!("train.discriminator: {e}")))
    }

    /// Stage-1 training config; the seed is filled in per stage.
    pub fn stage_one(&self) -> Result<TrainConfig> {
        let s = &self.train.stage1;
        Ok(TrainConfig {
            stage: Stage::One,
            lr: s.lr,
            batch: s.batch,
            iterations: s.iterations,
            lambda_adv: 0.0,
            adam: self.adam(),
            seed: 0,
            gan_k: 1,
            log_every: s.log_every,
            discriminator: self.discriminator()?,
        })
    }

    pub fn stage_two(&self) -> Result<TrainConfig> {
        let s = &self.train.stage2;
        Ok(TrainConfig {
            stage: Stage::Two,
            lr: s.lr,
            batch: s.batch,
            iterations: s.iterations,
            lambda_adv: s.lambda_adv,
            adam: self.adam(),
            seed: 0,
            gan_k: s.gan_k,
            log_every: s.log_every,
            discriminator: self.discriminator()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch()?;
        self.synthetic_degradation()?;
        for c in [self.stage_one()?, self.stage_two()?] {
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.stage_two().unwrap().lambda_adv, 1e-3);
        assert_eq!(c.stage_two().unwrap().iterations * 10, c.stage_one().unwrap().iterations);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_json(r#"{"train": {"stage2": {"lr": 1e-5}}, "arch": "dm_net"}"#).unwrap();
        assert_eq!(c.train.stage2.lr, 1e-5);
        assert_eq!(c.train.stage2.lambda_adv, 1e-3);
        assert_eq!(c.train.stage1, Stage1Section::default());
        assert_eq!(c.arch().unwrap(), Arch::dm_net_default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in [
            r#"{"archh": "sr_small"}"#,
            r#"{"train": {"stage1": {"learning_rate": 1}}}"#,
            r#"{"output": {"dir": "x", "extra": 1}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for doc in [
            r#"{"arch": "discriminator"}"#,
            r#"{"arch": "resnet"}"#,
            r#"{"train": {"stage2": {"gan_k": 0}}}"#,
            r#"{"degradation": {"synthetic": "jpeg"}}"#,
            r#"{"train": {"discriminator": "sr_small"}}"#,
        ] {
            assert!(RunConfig::from_json(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_json(r#"{"train": {"master_seed": 9}}"#).unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
