use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusConfig, SynthConfig};
use crate::dsp::FeatureConfig;
use crate::error::{Error, Result};
use crate::init::PretrainConfig;
use crate::lstm::{Arch, TrainConfig};
use crate::metrics::System;

/// How detector networks are assigned to noise levels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// One network per SNR level, evaluated at that level.
    #[default]
    Matched,
    /// One network trained on every level at once.
    Pooled,
}

/// Utterance counts and synthesis settings. The SNR levels come from the
/// experiment itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSize {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub synth: SynthConfig,
}

impl Default for CorpusSize {
    fn default() -> Self {
        let c = CorpusConfig::default();
        CorpusSize {
            n_train: c.n_train,
            n_val: c.n_val,
            n_test: c.n_test,
            synth: c.synth,
        }
    }
}

/// Everything a run depends on. Loadable from a TOML file; every key is
/// optional and falls back to the desk defaults.
///
/// ```toml
/// output_dir = "runs/desk"
/// master_seed = 7
/// snr_levels = [-5.0, 0.0, 5.0]
/// systems = ["None", "LSTM", "LSTM-AA"]
/// hidden = [64, 64]
/// training_mode = "matched"
///
/// [corpus]
/// n_train = 80
///
/// [train]
/// learning_rate = 0.001
/// patience = 40
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Where the corpus lives. Defaults to `<output_dir>/data`.
    pub dataset_dir: Option<PathBuf>,
    pub master_seed: u64,
    pub snr_levels: Vec<f64>,
    pub systems: Vec<System>,
    pub hidden: Vec<usize>,
    pub training_mode: TrainingMode,
    pub corpus: CorpusSize,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub pretrain: PretrainConfig,
    #[serde(skip)]
    source_text: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("runs/desk"),
            dataset_dir: None,
            master_seed: 7,
            snr_levels: vec![-5.0, 0.0, 5.0],
            systems: System::ALL.to_vec(),
            hidden: vec![64, 64],
            training_mode: TrainingMode::Matched,
            corpus: CorpusSize::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            pretrain: PretrainConfig::default(),
            source_text: None,
        }
    }
}

impl ExperimentConfig {
    /// 80/15/10 utterances at SNR {-5, 0, 5}.
    pub fn desk() -> Self {
        Self::default()
    }

    /// 800 / 150 / 50 utterances at all five noise levels.
    pub fn full_scale() -> Self {
        let c = CorpusConfig::full_scale();
        ExperimentConfig {
            output_dir: PathBuf::from("runs/full"),
            snr_levels: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            corpus: CorpusSize {
                n_train: c.n_train,
                n_val: c.n_val,
                n_test: c.n_test,
                synth: c.synth,
            },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.source_text = Some(text.to_string());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    /// The text the config was loaded from, or a fresh serialization.
    pub fn snapshot(&self) -> String {
        match &self.source_text {
            Some(t) => t.clone(),
            None => toml::to_string(self).expect("config serializes"),
        }
    }

    /// Drops the loaded source text, e.g. after fields were overridden.
    pub fn mark_modified(&mut self) {
        self.source_text = None;
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            n_train: self.corpus.n_train,
            n_val: self.corpus.n_val,
            n_test: self.corpus.n_test,
            snr_levels: self.snr_levels.clone(),
            synth: self.corpus.synth.clone(),
        }
    }

    pub fn arch(&self) -> Result<Arch> {
        let dim = self.features.feature_dim();
        Arch::new(dim, self.hidden.clone(), dim)
    }

    pub fn wants(&self, system: System) -> bool {
        self.systems.contains(&system)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.corpus_config().validate()?;
        self.arch()?;
        self.train.validate()?;
        self.pretrain.validate()?;
        if self.systems.is_empty() {
            return Err(Error::InvalidConfig("no systems requested".into()));
        }
        let distinct: BTreeSet<System> = self.systems.iter().copied().collect();
        if distinct.len() != self.systems.len() {
            return Err(Error::InvalidConfig("duplicate system".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("empty output_dir".into()));
        }
        Ok(())
    }
}
