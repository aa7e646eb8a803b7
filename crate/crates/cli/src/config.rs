use std::fs;
use std::path::{Path, PathBuf};

use pgn_core::pgn::{ModelConfig, PointerLossScope, Variant, DEFAULT_LATENT};
use pgn_core::tracegen::{DatasetSpec, Kind, SplitSpec};
use pgn_core::train::{TrainConfig, FULL_EPOCHS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Where `fixed_ptrs` models take their pointers from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerSource {
    /// Ground-truth data-structure pointers.
    #[default]
    Truth,
    /// Pointers carried by a first-phase `pgn` model.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: Kind,
    #[serde(default)]
    pub master_seed: u64,
    /// Defaults to the standard protocol for `kind`.
    #[serde(default)]
    pub splits: Option<Vec<SplitSpec>>,
    /// Load an existing dataset instead of generating one.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl DatasetSection {
    pub fn spec(&self) -> DatasetSpec {
        match &self.splits {
            Some(splits) => DatasetSpec {
                kind: self.kind,
                master_seed: self.master_seed,
                splits: splits.clone(),
            },
            None => DatasetSpec::standard(self.kind, self.master_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub latent_dim: usize,
    pub pointer_loss_scope: PointerLossScope,
    pub pointer_source: PointerSource,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::Pgn,
            latent_dim: DEFAULT_LATENT,
            pointer_loss_scope: PointerLossScope::All,
            pointer_source: PointerSource::Truth,
        }
    }
}

impl ModelSection {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            pointer_loss_scope: self.pointer_loss_scope,
            ..ModelConfig::with_latent(self.variant, self.latent_dim)
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Core(pgn_core::Error::VersionMismatch {
                expected: CONFIG_VERSION,
                found: cfg.version,
            }));
        }
        Ok(cfg)
    }

    /// Full protocol: standard splits, 32 latents, 5000 epochs,
    /// five seeds.
    pub fn apply_full_protocol(&mut self) {
        self.dataset.splits = None;
        self.model.latent_dim = DEFAULT_LATENT;
        self.train.learning_rate = 0.005;
        self.train.epochs = FULL_EPOCHS;
        self.seeds = (0..5).collect();
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must be non-empty".into()));
        }
        self.model.config().validate()?;
        self.train.validate()?;
        let spec = self.dataset.spec();
        spec.validate()?;
        for needed in ["train", "val"] {
            if spec.split(needed).is_none() {
                return Err(CliError::Config(format!(
                    "dataset needs a '{needed}' split"
                )));
            }
        }
        if self.model.pointer_source == PointerSource::Learned
            && self.model.variant != Variant::FixedPtrs
        {
            return Err(CliError::Config(
                "pointer_source applies to fixed_ptrs only".into(),
            ));
        }
        if let Some(dir) = &self.dataset.dir {
            if !dir.is_dir() {
                return Err(CliError::Config(format!(
                    "dataset dir {} does not exist",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            version = 1
            [dataset]
            kind = "dsu"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.model.variant, Variant::Pgn);
        assert_eq!(cfg.train.learning_rate, 0.005);
        assert_eq!(cfg.dataset.spec(), DatasetSpec::standard(Kind::Dsu, 0));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<ExperimentConfig, _> = toml::from_str(
            r#"
            version = 1
            [dataset]
            kind = "dsu"
            [train]
            learning_rat = 0.1
            "#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn full_protocol_preset() {
        let mut cfg: ExperimentConfig = toml::from_str(
            r#"
            version = 1
            seeds = [9]
            [dataset]
            kind = "lct"
            splits = [{ name = "train", episodes = 2, n = 4, ops = 3 }]
            [train]
            epochs = 3
            "#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
        cfg.apply_full_protocol();
        assert_eq!(cfg.train.epochs, 5000);
        assert_eq!(cfg.seeds.len(), 5);
        assert!(cfg.dataset.spec().split("test_200").is_some());
        cfg.validate().unwrap();
    }
}
