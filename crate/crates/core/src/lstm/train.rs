//! Early-stopped gradient-descent training over whole sequences.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::network::{loss_and_gradient, predict, sse_loss};
use super::weights::LstmWeights;
use crate::corpus::derive_seed;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Global gradient-norm ceiling applied before every update.
    pub clip_norm: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            clip_norm: 5.0,
            patience: 40,
            max_epochs: 1000,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        Ok(())
    }
}

/// One training example: a network input sequence and its target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqPair {
    pub input: Matrix,
    pub target: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PatienceExhausted,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_sse: f64,
    pub val_sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// Epochs `1..=n`, one entry each.
    pub epochs: Vec<EpochStats>,
    /// Validation sse of the initial weights, before any update.
    pub initial_val_sse: f64,
    pub best_epoch: usize,
    pub best_validation_sse: f64,
    pub stop_reason: StopReason,
}

impl TrainRecord {
    pub fn epoch(&self, epoch: usize) -> Option<&EpochStats> {
        self.epochs.get(epoch.checked_sub(1)?)
    }

    /// Writes `epoch,train_sse,val_sse`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.epochs.is_empty() {
            return Err(Error::Empty("train record"));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_sse", "val_sse"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_sse.to_string(),
                e.val_sse.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Tracks the best validation loss and decides when to stop: after
/// `patience` epochs without a strict improvement, or at `max_epochs`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    max_epochs: usize,
    epoch: usize,
    best_epoch: usize,
    best: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: Option<StopReason>,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        EarlyStopping {
            patience,
            max_epochs,
            epoch: 0,
            best_epoch: 0,
            best: f64::INFINITY,
        }
    }

    /// Records the validation loss of the next epoch (epochs count from 1).
    pub fn observe(&mut self, val_loss: f64) -> Observation {
        self.epoch += 1;
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = self.epoch;
        }
        let stop = if self.epoch - self.best_epoch >= self.patience {
            Some(StopReason::PatienceExhausted)
        } else if self.epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        Observation { improved, stop }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Scales `g` down so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradient(g: &mut LstmWeights, max_norm: f64) -> f64 {
    let norm = g.global_norm();
    if norm > max_norm {
        g.scale(max_norm / norm);
    }
    norm
}

/// Summed sse of `w` over a set of pairs, reduced in input order.
pub fn dataset_sse(w: &LstmWeights, set: &[SeqPair], exec: Exec) -> Result<f64> {
    let parts = par::try_map(exec, set, |p| sse_loss(&predict(w, &p.input)?, &p.target))?;
    Ok(parts.into_iter().sum())
}

fn check_set(w: &LstmWeights, set: &[SeqPair], what: &'static str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Empty(what));
    }
    for (i, p) in set.iter().enumerate() {
        if p.input.cols() != w.arch.input
            || p.target.cols() != w.arch.output
            || p.input.rows() != p.target.rows()
        {
            return Err(Error::DimensionMismatch(format!(
                "{what} pair {i}: input {:?}, target {:?}, network {}",
                p.input.shape(),
                p.target.shape(),
                w.arch
            )));
        }
    }
    Ok(())
}

enum OptState {
    Sgd,
    Adam {
        m: Box<LstmWeights>,
        v: Box<LstmWeights>,
        step: i32,
    },
}

impl OptState {
    fn new(opt: Optimizer, w: &LstmWeights) -> Self {
        match opt {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Adam { .. } => OptState::Adam {
                m: Box::new(w.zeros_like()),
                v: Box::new(w.zeros_like()),
                step: 0,
            },
        }
    }

    fn apply(&mut self, opt: Optimizer, lr: f64, w: &mut LstmWeights, g: &LstmWeights) {
        match (self, opt) {
            (OptState::Sgd, _) => w.add_scaled(g, -lr),
            (
                OptState::Adam { m, v, step },
                Optimizer::Adam {
                    beta1,
                    beta2,
                    epsilon,
                },
            ) => {
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - beta2.powi(*step);
                let ws = w.slices_mut();
                for (((wp, gp), mp), vp) in ws
                    .into_iter()
                    .zip(g.slices())
                    .zip(m.slices_mut())
                    .zip(v.slices_mut())
                {
                    for i in 0..wp.len() {
                        mp[i] = beta1 * mp[i] + (1.0 - beta1) * gp[i];
                        vp[i] = beta2 * vp[i] + (1.0 - beta2) * gp[i] * gp[i];
                        wp[i] -= lr * (mp[i] / c1) / ((vp[i] / c2).sqrt() + epsilon);
                    }
                }
            }
            (OptState::Adam { .. }, Optimizer::Sgd) => unreachable!("state built from config"),
        }
    }
}

/// Trains from `init` and returns the best-validation snapshot with its record.
pub fn train(
    init: &LstmWeights,
    train_set: &[SeqPair],
    val_set: &[SeqPair],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(LstmWeights, TrainRecord)> {
    train_with_observer(init, train_set, val_set, cfg, exec, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_observer<F: FnMut(&EpochStats)>(
    init: &LstmWeights,
    train_set: &[SeqPair],
    val_set: &[SeqPair],
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: F,
) -> Result<(LstmWeights, TrainRecord)> {
    cfg.validate()?;
    check_set(init, train_set, "training set")?;
    check_set(init, val_set, "validation set")?;

    let initial_val_sse = dataset_sse(init, val_set, exec)?;
    let mut w = init.clone();
    let mut best = init.clone();
    let mut opt = OptState::new(cfg.optimizer, init);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.max_epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::new();
    loop {
        let epoch = stopper.epoch() + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut train_sse = 0.0;
        for &i in &order {
            let pair = &train_set[i];
            let (loss, mut grad) = loss_and_gradient(&w, &pair.input, &pair.target)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite loss or gradient on training sequence {i}"),
                });
            }
            train_sse += loss;
            clip_gradient(&mut grad, cfg.clip_norm);
            opt.apply(cfg.optimizer, cfg.learning_rate, &mut w, &grad);
        }
        let val_sse = dataset_sse(&w, val_set, exec)?;
        if !val_sse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation sse {val_sse}"),
            });
        }
        let stats = EpochStats {
            epoch,
            train_sse,
            val_sse,
        };
        epochs.push(stats);
        on_epoch(&stats);
        let obs = stopper.observe(val_sse);
        if obs.improved {
            best.clone_from(&w);
        }
        if let Some(stop_reason) = obs.stop {
            let record = TrainRecord {
                epochs,
                initial_val_sse,
                best_epoch: stopper.best_epoch(),
                best_validation_sse: stopper.best(),
                stop_reason,
            };
            return Ok((best, record));
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lstm::weights::{init_random, Arch};

    #[test]
    fn stops_patience_after_last_improvement() {
        // Loss improves every epoch up to 100, then plateaus.
        let mut s = EarlyStopping::new(40, 1000);
        let mut stop = None;
        for epoch in 1..=1000 {
            let loss = if epoch <= 100 {
                1000.0 - epoch as f64
            } else {
                900.0
            };
            if let Some(r) = s.observe(loss).stop {
                stop = Some((epoch, r));
                break;
            }
        }
        assert_eq!(stop, Some((140, StopReason::PatienceExhausted)));
        assert_eq!(s.best_epoch(), 100);
    }

    #[test]
    fn stops_at_max_epochs() {
        let mut s = EarlyStopping::new(40, 25);
        let mut last = None;
        for epoch in 1..=100 {
            if let Some(r) = s.observe(-(epoch as f64)).stop {
                last = Some((epoch, r));
                break;
            }
        }
        assert_eq!(last, Some((25, StopReason::MaxEpochs)));
    }

    #[test]
    fn clipping_bounds_norm() {
        let arch = Arch::new(3, vec![4], 3).unwrap();
        let mut g = init_random(&arch, 1).unwrap();
        g.scale(100.0);
        let before = clip_gradient(&mut g, 5.0);
        assert!(before > 5.0);
        assert!(g.global_norm() <= 5.0 + 1e-12);
        let mut small = init_random(&arch, 1).unwrap();
        small.scale(1e-3);
        let copy = small.clone();
        clip_gradient(&mut small, 5.0);
        assert_eq!(small, copy);
    }

    fn identity_net(dim: usize) -> LstmWeights {
        // Zero LSTM, projection bias carries the answer: output == bias.
        let arch = Arch::new(dim, vec![2], dim).unwrap();
        LstmWeights::zeros(&arch).unwrap()
    }

    #[test]
    fn zero_loss_fixture_stops_after_patience() {
        let w = identity_net(2);
        // Targets equal the constant zero output, so the loss is already 0.
        let pair = SeqPair {
            input: Matrix::zeros(4, 2),
            target: Matrix::zeros(4, 2),
        };
        let cfg = TrainConfig {
            patience: 5,
            ..Default::default()
        };
        let (out, rec) = train(
            &w,
            std::slice::from_ref(&pair),
            std::slice::from_ref(&pair),
            &cfg,
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(rec.epochs[0].val_sse, 0.0);
        assert_eq!(rec.best_epoch, 1);
        assert_eq!(rec.epochs.len(), 6);
        assert_eq!(rec.stop_reason, StopReason::PatienceExhausted);
        assert_eq!(out, w);
    }

    fn tiny_task(seed: u64) -> (Vec<SeqPair>, Vec<SeqPair>) {
        // Targets are a delayed, scaled copy of the inputs.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |n: usize| -> Vec<SeqPair> {
            (0..n)
                .map(|_| {
                    let t = 12;
                    let x: Vec<f64> = (0..t * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let mut y = vec![0.0; t * 2];
                    for s in 1..t {
                        y[s * 2] = 0.5 * x[(s - 1) * 2];
                        y[s * 2 + 1] = -0.5 * x[s * 2 + 1];
                    }
                    SeqPair {
                        input: Matrix::from_vec(t, 2, x).unwrap(),
                        target: Matrix::from_vec(t, 2, y).unwrap(),
                    }
                })
                .collect()
        };
        (make(8), make(4))
    }

    #[test]
    fn tiny_task_converges() {
        let (tr, va) = tiny_task(3);
        let arch = Arch::new(2, vec![8], 2).unwrap();
        let init = init_random(&arch, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 20,
            ..Default::default()
        };
        let (best, rec) = train(&init, &tr, &va, &cfg, Exec::Parallel).unwrap();
        assert!(rec.epochs.len() <= 200);
        assert!(
            rec.best_validation_sse < 0.5 * rec.epochs[0].val_sse,
            "{} vs {}",
            rec.best_validation_sse,
            rec.epochs[0].val_sse
        );
        // Returned weights are the best snapshot.
        let again = dataset_sse(&best, &va, Exec::Sequential).unwrap();
        assert_eq!(again, rec.best_validation_sse);
        let min = rec
            .epochs
            .iter()
            .map(|e| e.val_sse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, rec.best_validation_sse);
        assert_eq!(rec.epoch(rec.best_epoch).unwrap().val_sse, min);
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let (tr, va) = tiny_task(4);
        let arch = Arch::new(2, vec![5], 2).unwrap();
        let init = init_random(&arch, 8).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.005,
            max_epochs: 15,
            optimizer: Optimizer::adam(),
            ..Default::default()
        };
        let a = train(&init, &tr, &va, &cfg, Exec::Parallel).unwrap();
        let b = train(&init, &tr, &va, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.stop_reason, StopReason::MaxEpochs);
        assert_eq!(a.1.epochs.len(), 15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (tr, va) = tiny_task(5);
        let init = init_random(&Arch::new(2, vec![3], 2).unwrap(), 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&init, &[], &va, &cfg, Exec::Parallel),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            train(&init, &tr, &[], &cfg, Exec::Parallel),
            Err(Error::Empty(_))
        ));
        let bad_cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(train(&init, &tr, &va, &bad_cfg, Exec::Parallel).is_err());
        let other = init_random(&Arch::new(3, vec![3], 2).unwrap(), 0).unwrap();
        assert!(matches!(
            train(&other, &tr, &va, &cfg, Exec::Parallel),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let (tr, va) = tiny_task(6);
        let mut init = init_random(&Arch::new(2, vec![3], 2).unwrap(), 0).unwrap();
        init.proj_w.as_mut_slice()[0] = f64::MAX;
        let cfg = TrainConfig::default();
        let err = train(&init, &tr, &va, &cfg, Exec::Parallel).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }), "{err}");
    }
}
