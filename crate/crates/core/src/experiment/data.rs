use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::Dataset;
use crate::dsp::Frame;
use crate::error::{Error, Result};
use crate::lstm::{Matrix, Normalizer, SeqPair};
use crate::par::{self, Exec};

const F0_SLOT: usize = 0;

pub fn frames_to_matrix(frames: &[Frame]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = frames.iter().map(Frame::to_vec).collect();
    Matrix::from_rows(&rows)
}

/// Raw feature matrices for every utterance at the requested levels.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    levels: Vec<f64>,
    clean: BTreeMap<String, Matrix>,
    noisy: BTreeMap<String, Vec<Matrix>>,
}

impl FeatureStore {
    pub fn load(root: &Path, ds: &Dataset, levels: &[f64], exec: Exec) -> Result<Self> {
        for &l in levels {
            if !ds.has_level(l) {
                return Err(Error::InvalidConfig(format!(
                    "dataset has no SNR level {l}"
                )));
            }
        }
        let ids: Vec<&String> = ds.utterances.iter().map(|u| &u.id).collect();
        let loaded = par::try_map(exec, &ids, |id| -> Result<(Matrix, Vec<Matrix>)> {
            let clean = frames_to_matrix(&Dataset::clean_features(root, id)?)?;
            let noisy = levels
                .iter()
                .map(|&l| frames_to_matrix(&Dataset::noisy_features(root, id, l)?))
                .collect::<Result<Vec<_>>>()?;
            Ok((clean, noisy))
        })?;
        let mut clean = BTreeMap::new();
        let mut noisy = BTreeMap::new();
        for (id, (c, n)) in ids.into_iter().zip(loaded) {
            clean.insert(id.clone(), c);
            noisy.insert(id.clone(), n);
        }
        Ok(FeatureStore {
            levels: levels.to_vec(),
            clean,
            noisy,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn level_index(&self, snr_db: f64) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| l == snr_db)
            .ok_or_else(|| Error::InvalidConfig(format!("SNR level {snr_db} not loaded")))
    }

    pub fn clean(&self, id: &str) -> Result<&Matrix> {
        self.clean
            .get(id)
            .ok_or_else(|| Error::UnknownUtterance(id.to_string()))
    }

    pub fn noisy(&self, id: &str, snr_db: f64) -> Result<&Matrix> {
        let k = self.level_index(snr_db)?;
        self.noisy
            .get(id)
            .map(|v| &v[k])
            .ok_or_else(|| Error::UnknownUtterance(id.to_string()))
    }

    /// Statistics over the clean and noisy features of `train_ids`, shared by
    /// network inputs and targets. The log_f0 slot is scaled by its voiced
    /// frames; unvoiced frames map to a large negative constant.
    pub fn fit_normalizer(&self, train_ids: &[String]) -> Result<Normalizer> {
        let mut seqs: Vec<&Matrix> = Vec::new();
        for id in train_ids {
            seqs.push(self.clean(id)?);
            for &l in &self.levels {
                seqs.push(self.noisy(id, l)?);
            }
        }
        let mut norm = Normalizer::fit(seqs.iter().copied())?;
        norm.refit_nonzero(F0_SLOT, seqs.iter().copied())?;
        Ok(norm)
    }

    /// Normalized clean sequences, for the identity task.
    pub fn clean_set(&self, ids: &[String], norm: &Normalizer) -> Result<Vec<Matrix>> {
        ids.iter().map(|id| norm.apply(self.clean(id)?)).collect()
    }

    /// Normalized (noisy, clean) pairs at each of `levels`.
    pub fn pairs(&self, ids: &[String], levels: &[f64], norm: &Normalizer) -> Result<Vec<SeqPair>> {
        let mut out = Vec::with_capacity(ids.len() * levels.len());
        for &l in levels {
            for id in ids {
                out.push(SeqPair {
                    input: norm.apply(self.noisy(id, l)?)?,
                    target: norm.apply(self.clean(id)?)?,
                });
            }
        }
        Ok(out)
    }
}
