//! The experiment file: one TOML document holding every stage's settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ratesv::backend::PldaConfig;
use ratesv::experiment::{BackendKind, ExperimentConfig, Protocol, ToyCorpusConfig};
use ratesv::features::FrontEndConfig;
use ratesv::model::ModelConfig;
use ratesv::trainer::{SystemPreset, TrainConfig};
use ratesv::tsm::TsmConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root of every stage's outputs. `--workdir` takes precedence.
    pub workdir: Option<PathBuf>,
    /// Where `synth` writes audio; defaults to `<workdir>/corpus`.
    pub corpus: Option<PathBuf>,
}

/// Top-level keys of the config file. Every section is optional and falls
/// back to the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub systems: Vec<SystemPreset>,
    pub backend: BackendKind,
    pub paths: PathsConfig,
    pub corpus: ToyCorpusConfig,
    pub tsm: TsmConfig,
    pub features: FrontEndConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub plda: PldaConfig,
}

impl Default for FileConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        FileConfig {
            seed: e.seed,
            protocol: e.protocol,
            systems: e.systems,
            backend: e.backend,
            paths: PathsConfig::default(),
            corpus: e.corpus,
            tsm: e.tsm,
            features: e.features,
            model: e.model,
            train: e.train,
            plda: e.plda,
        }
    }
}

impl FileConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            protocol: self.protocol,
            systems: self.systems.clone(),
            backend: self.backend,
            corpus: self.corpus.clone(),
            tsm: self.tsm.clone(),
            features: self.features.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
            plda: self.plda.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
