//! Corpus construction and the on-disk layout:
//!
//! ```text
//! <root>/dataset.json
//! <root>/corpus/<id>/clean.wav
//! <root>/corpus/<id>/truth_f0.csv            frame_index,f0_hz,voiced
//! <root>/corpus/<id>/clean_features.csv      frame_index,log_f0,energy,mfcc_0,...
//! <root>/corpus/<id>/snr_<level>.wav
//! <root>/corpus/<id>/snr_<level>_features.csv
//! ```
//!
//! `dataset.json` holds the [`Dataset`] struct: format version, master seed,
//! corpus and feature configs, the three id splits, and one entry per
//! utterance with its synthesis seed and per-level noise seeds.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{mix_at_snr, Analyzer, FeatureConfig, Frame};
use crate::error::{Error, Result};
use crate::metrics::F0Track;
use crate::par::{self, Exec};
use crate::signal::Signal;

use super::noise::{derive_seed, white_noise_at};
use super::synth::{synthesize_utterance, SynthConfig, UtteranceSpec};

pub const DATASET_FILE: &str = "dataset.json";
pub const DATASET_FORMAT_VERSION: u32 = 1;

const TAG_UTTERANCE: u64 = 0x7574_7465;
const TAG_PLAN: u64 = 1;
const TAG_SYNTH: u64 = 2;
const TAG_NOISE: u64 = 0x6e6f_6973;
const TAG_SPLIT: u64 = 0x7370_6c74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub snr_levels: Vec<f64>,
    pub synth: SynthConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_train: 80,
            n_val: 15,
            n_test: 10,
            snr_levels: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            synth: SynthConfig::default(),
        }
    }
}

impl CorpusConfig {
    /// 800 / 150 / 50 utterances.
    pub fn full_scale() -> Self {
        CorpusConfig {
            n_train: 800,
            n_val: 150,
            n_test: 50,
            ..Default::default()
        }
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig(format!(
                "split sizes must be positive, got {}/{}/{}",
                self.n_train, self.n_val, self.n_test
            )));
        }
        if self.snr_levels.is_empty() || self.snr_levels.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "SNR levels must be finite and non-empty".into(),
            ));
        }
        let distinct: BTreeSet<u64> = self.snr_levels.iter().map(|s| s.to_bits()).collect();
        if distinct.len() != self.snr_levels.len() {
            return Err(Error::InvalidConfig("duplicate SNR level".into()));
        }
        let s = &self.synth;
        if !(s.duration_min >= 0.4 && s.duration_max >= s.duration_min) {
            return Err(Error::InvalidConfig(
                "utterance durations must be at least 0.4 s".into(),
            ));
        }
        if !(s.base_f0_min > 0.0 && s.base_f0_max >= s.base_f0_min) {
            return Err(Error::InvalidConfig("bad base f0 range".into()));
        }
        Ok(())
    }
}

/// File-name form of an SNR level: `-5`, `0`, `2.5`.
pub fn format_snr(snr_db: f64) -> String {
    format!("{snr_db}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSeed {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEntry {
    pub id: String,
    pub seed: u64,
    pub noise_seeds: Vec<NoiseSeed>,
    pub n_samples: usize,
    pub n_frames: usize,
    pub voiced_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub format_version: u32,
    pub master_seed: u64,
    pub corpus: CorpusConfig,
    pub features: FeatureConfig,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub utterances: Vec<UtteranceEntry>,
}

impl Dataset {
    pub fn snr_levels(&self) -> &[f64] {
        &self.corpus.snr_levels
    }

    pub fn utterance_dir(root: &Path, id: &str) -> PathBuf {
        root.join("corpus").join(id)
    }

    pub fn clean_wav_path(root: &Path, id: &str) -> PathBuf {
        Self::utterance_dir(root, id).join("clean.wav")
    }

    pub fn truth_path(root: &Path, id: &str) -> PathBuf {
        Self::utterance_dir(root, id).join("truth_f0.csv")
    }

    pub fn clean_features_path(root: &Path, id: &str) -> PathBuf {
        Self::utterance_dir(root, id).join("clean_features.csv")
    }

    pub fn noisy_wav_path(root: &Path, id: &str, snr_db: f64) -> PathBuf {
        Self::utterance_dir(root, id).join(format!("snr_{}.wav", format_snr(snr_db)))
    }

    pub fn noisy_features_path(root: &Path, id: &str, snr_db: f64) -> PathBuf {
        Self::utterance_dir(root, id).join(format!("snr_{}_features.csv", format_snr(snr_db)))
    }

    pub fn clean_features(root: &Path, id: &str) -> Result<Vec<Frame>> {
        Frame::read_csv(&Self::clean_features_path(root, id))
    }

    pub fn noisy_features(root: &Path, id: &str, snr_db: f64) -> Result<Vec<Frame>> {
        Frame::read_csv(&Self::noisy_features_path(root, id, snr_db))
    }

    pub fn truth(root: &Path, id: &str) -> Result<F0Track> {
        F0Track::read_csv(&Self::truth_path(root, id))
    }

    pub fn noisy_signal(root: &Path, id: &str, snr_db: f64) -> Result<Signal> {
        Signal::read_wav(&Self::noisy_wav_path(root, id, snr_db))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.utterances.iter().any(|u| u.id == id)
    }

    pub fn has_level(&self, snr_db: f64) -> bool {
        self.snr_levels().contains(&snr_db)
    }

    pub fn load(root: &Path) -> Result<Dataset> {
        let path = root.join(DATASET_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ds: Dataset = serde_json::from_str(&text)?;
        if ds.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "{}: unsupported dataset format {}",
                path.display(),
                ds.format_version
            )));
        }
        Ok(ds)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(DATASET_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Synthesizes, mixes, featurizes and persists `n_train + n_val + n_test`
/// utterances under `root`, then writes `dataset.json`. Output bytes are a
/// pure function of the configs and `master_seed`.
pub fn build_dataset(
    cfg: &CorpusConfig,
    features: &FeatureConfig,
    master_seed: u64,
    root: &Path,
    exec: Exec,
) -> Result<Dataset> {
    cfg.validate()?;
    features.validate()?;
    let analyzer = Analyzer::new(features)?;
    let indices: Vec<usize> = (0..cfg.total()).collect();
    let ids: Vec<String> = indices.iter().map(|i| format!("utt_{i:04}")).collect();
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        let dup = ids
            .iter()
            .find(|id| ids.iter().filter(|x| x == id).count() > 1);
        return Err(Error::DuplicateId(dup.cloned().unwrap_or_default()));
    }
    create_dir(&root.join("corpus"))?;

    let entries = par::try_map(exec, &indices, |&i| {
        let id = &ids[i];
        build_one(cfg, &analyzer, master_seed, i, id, root)
            .map_err(|e| e.context(format!("utterance {id}")))
    })?;

    let mut order = indices.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        master_seed,
        &[TAG_SPLIT],
    )));
    let pick = |range: std::ops::Range<usize>| {
        let mut v: Vec<String> = order[range].iter().map(|&i| ids[i].clone()).collect();
        v.sort();
        v
    };
    let test = pick(0..cfg.n_test);
    let validation = pick(cfg.n_test..cfg.n_test + cfg.n_val);
    let train = pick(cfg.n_test + cfg.n_val..cfg.total());

    let ds = Dataset {
        format_version: DATASET_FORMAT_VERSION,
        master_seed,
        corpus: cfg.clone(),
        features: features.clone(),
        train,
        validation,
        test,
        utterances: entries,
    };
    ds.save(root)?;
    Ok(ds)
}

fn build_one(
    cfg: &CorpusConfig,
    analyzer: &Analyzer,
    master_seed: u64,
    index: usize,
    id: &str,
    root: &Path,
) -> Result<UtteranceEntry> {
    let features = analyzer.config();
    let seed = derive_seed(master_seed, &[TAG_UTTERANCE, index as u64]);
    let mut plan_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_PLAN]));
    let spec = UtteranceSpec::random(id, &mut plan_rng, &cfg.synth, features);
    let utt = synthesize_utterance(&spec, derive_seed(seed, &[TAG_SYNTH]), features)?;

    let dir = Dataset::utterance_dir(root, id);
    create_dir(&dir)?;
    utt.clean.write_wav(&Dataset::clean_wav_path(root, id))?;
    utt.truth_f0.write_csv(&Dataset::truth_path(root, id))?;
    let clean_frames = analyzer.frames(&utt.clean, Some(&utt.truth_f0))?;
    Frame::write_csv(&clean_frames, &Dataset::clean_features_path(root, id))?;

    let mut noise_seeds = Vec::with_capacity(cfg.snr_levels.len());
    for &snr in &cfg.snr_levels {
        let noise_seed = derive_seed(master_seed, &[TAG_NOISE, index as u64, snr.to_bits()]);
        let noise = white_noise_at(utt.clean.len(), noise_seed, features.sample_rate)?;
        let noisy = mix_at_snr(&utt.clean, &noise, snr)?.quantized_pcm16();
        noisy.write_wav(&Dataset::noisy_wav_path(root, id, snr))?;
        let frames = analyzer.frames(&noisy, None)?;
        Frame::write_csv(&frames, &Dataset::noisy_features_path(root, id, snr))?;
        noise_seeds.push(NoiseSeed {
            snr_db: snr,
            seed: noise_seed,
        });
    }
    Ok(UtteranceEntry {
        id: id.to_string(),
        seed,
        noise_seeds,
        n_samples: utt.clean.len(),
        n_frames: utt.truth_f0.len(),
        voiced_frames: utt.truth_f0.voiced_count(),
    })
}
