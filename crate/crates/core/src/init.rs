//! Auto-associative initialization: train the network on the identity task
//! over clean features, then hand its weights to the denoising run.

use serde::{Deserialize, Serialize};

use crate::corpus::derive_seed;
use crate::error::{Error, Result};
use crate::lstm::{
    init_random, train_with_observer, Arch, EpochStats, LstmWeights, Matrix, Optimizer, SeqPair,
    TrainConfig, TrainRecord,
};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Seeds both the starting weights and the epoch shuffle.
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        PretrainConfig {
            learning_rate: t.learning_rate,
            clip_norm: t.clip_norm,
            patience: t.patience,
            max_epochs: t.max_epochs,
            seed: 0,
            optimizer: t.optimizer,
        }
    }
}

impl PretrainConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: derive_seed(self.seed, &[1]),
            optimizer: self.optimizer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.max_epochs < self.patience {
            return Err(Error::InvalidTrainConfig(format!(
                "max_epochs {} is below patience {}",
                self.max_epochs, self.patience
            )));
        }
        Ok(())
    }
}

/// Trains `arch` to reproduce its input on clean feature sequences and
/// returns the best-validation weights with their record.
pub fn pretrain_autoassociative(
    arch: &Arch,
    clean_train: &[Matrix],
    clean_val: &[Matrix],
    cfg: &PretrainConfig,
    exec: Exec,
) -> Result<(LstmWeights, TrainRecord)> {
    pretrain_with_observer(arch, clean_train, clean_val, cfg, exec, |_| {})
}

pub fn pretrain_with_observer<F: FnMut(&EpochStats)>(
    arch: &Arch,
    clean_train: &[Matrix],
    clean_val: &[Matrix],
    cfg: &PretrainConfig,
    exec: Exec,
    on_epoch: F,
) -> Result<(LstmWeights, TrainRecord)> {
    if arch.input != arch.output {
        return Err(Error::InvalidArchitecture(format!(
            "identity mapping needs input width == output width, got {arch}"
        )));
    }
    cfg.validate()?;
    let pairs = |seqs: &[Matrix]| -> Vec<SeqPair> {
        seqs.iter()
            .map(|m| SeqPair {
                input: m.clone(),
                target: m.clone(),
            })
            .collect()
    };
    let init = init_random(arch, derive_seed(cfg.seed, &[0]))?;
    train_with_observer(
        &init,
        &pairs(clean_train),
        &pairs(clean_val),
        &cfg.train_config(),
        exec,
        on_epoch,
    )
}

/// Copies the pretrained weights for use as the detector's starting point.
/// Every parameter, including the output projection, is carried over and
/// stays trainable.
pub fn transfer_weights(theta_a: &LstmWeights, detector: &Arch) -> Result<LstmWeights> {
    if &theta_a.arch != detector {
        return Err(Error::InvalidArchitecture(format!(
            "pretrained network {} does not match detector {}",
            theta_a.arch, detector
        )));
    }
    Ok(theta_a.clone())
}
