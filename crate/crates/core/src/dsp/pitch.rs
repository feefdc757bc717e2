//! Normalized cross-correlation pitch tracker.
//!
//! For a frame starting at sample `s` the analysis segment is
//! `x[s .. s + L + max_lag]` (zero padded past the end of the signal), mean
//! removed. For each lag `k` in the f0 search range
//!
//!   r(k) = sum_{n<L} a[n] a[n+k] / sqrt(E(0) E(k)),   E(k) = sum_{n<L} a[n+k]^2
//!
//! The chosen lag is the shortest local peak reaching 90% of the global
//! maximum, which keeps the tracker off sub-octaves on strongly periodic
//! input. A frame is voiced when that peak beats the voicing threshold and its
//! log energy is above the floor.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::metrics::F0Track;
use crate::signal::Signal;

use super::features::{frame_count, Analyzer, FeatureConfig};

const PEAK_FRACTION: f64 = 0.9;

/// Per-frame `(f0, voiced)` from the autocorrelation detector.
pub fn baseline_f0(signal: &Signal, cfg: &FeatureConfig) -> Result<F0Track> {
    track(&Analyzer::new(cfg)?, signal)
}

pub(crate) fn track(an: &Analyzer, signal: &Signal) -> Result<F0Track> {
    an.check_signal(signal)?;
    let cfg = an.config();
    let (frame, hop) = (cfg.frame_len(), cfg.hop_len());
    let sr = cfg.sample_rate as f64;
    let min_lag = (sr / cfg.f0_max).ceil() as usize;
    let max_lag = ((sr / cfg.f0_min).floor() as usize).max(min_lag);
    let corr = Correlator::new(frame, max_lag);
    let samples = signal.samples();
    let n = frame_count(samples.len(), cfg);
    let mut segment = vec![0.0; frame + max_lag];
    let f0 = (0..n)
        .map(|i| {
            let start = i * hop;
            if an.log_energy(&samples[start..start + frame]) <= cfg.energy_floor {
                return 0.0;
            }
            let end = (start + frame + max_lag).min(samples.len());
            segment.iter_mut().for_each(|v| *v = 0.0);
            segment[..end - start].copy_from_slice(&samples[start..end]);
            let mean = segment[..end - start].iter().sum::<f64>() / (end - start) as f64;
            segment[..end - start].iter_mut().for_each(|v| *v -= mean);
            let r = corr.nccf(&segment, min_lag);
            match pick_lag(&r) {
                Some((j, peak)) if peak > cfg.voicing_threshold => sr / (min_lag + j) as f64,
                _ => 0.0,
            }
        })
        .collect();
    F0Track::new(f0)
}

/// Index and value of the shortest local maximum within `PEAK_FRACTION` of the
/// global maximum.
fn pick_lag(r: &[f64]) -> Option<(usize, f64)> {
    let best = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return None;
    }
    let last = r.len() - 1;
    (0..r.len())
        .find(|&j| {
            let left = j == 0 || r[j] >= r[j - 1];
            let right = j == last || r[j] >= r[j + 1];
            left && right && r[j] >= PEAK_FRACTION * best
        })
        .map(|j| (j, r[j]))
}

/// FFT cross-correlation of a frame against its lag-extended segment.
struct Correlator {
    frame: usize,
    max_lag: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(frame: usize, max_lag: usize) -> Self {
        // Negative lags wrap to indices above `size - frame`, clear of 0..=max_lag.
        let size = (frame + max_lag).next_power_of_two();
        let mut planner = FftPlanner::new();
        Correlator {
            frame,
            max_lag,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    /// `r(k)` for `k in min_lag..=max_lag`; `segment.len() == frame + max_lag`.
    fn nccf(&self, segment: &[f64], min_lag: usize) -> Vec<f64> {
        let zero = Complex::new(0.0, 0.0);
        let mut a: Vec<Complex<f64>> = segment[..self.frame]
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        a.resize(self.size, zero);
        let mut b: Vec<Complex<f64>> = segment.iter().map(|&v| Complex::new(v, 0.0)).collect();
        b.resize(self.size, zero);
        self.forward.process(&mut a);
        self.forward.process(&mut b);
        let mut c: Vec<Complex<f64>> = a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect();
        self.inverse.process(&mut c);
        let scale = 1.0 / self.size as f64;

        let mut prefix = Vec::with_capacity(segment.len() + 1);
        prefix.push(0.0);
        for v in segment {
            prefix.push(prefix.last().unwrap() + v * v);
        }
        let energy = |k: usize| prefix[k + self.frame] - prefix[k];
        let e0 = energy(0);
        (min_lag..=self.max_lag)
            .map(|k| {
                let denom = (e0 * energy(k)).sqrt();
                if denom > 0.0 {
                    c[k].re * scale / denom
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Normalized cross-correlation of `segment[..frame]` against lags
/// `min_lag..=max_lag`; `segment` must hold at least `frame + max_lag` samples.
pub fn nccf(segment: &[f64], frame: usize, min_lag: usize, max_lag: usize) -> Vec<f64> {
    Correlator::new(frame, max_lag).nccf(&segment[..frame + max_lag], min_lag)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn brute_nccf(seg: &[f64], frame: usize, min_lag: usize, max_lag: usize) -> Vec<f64> {
        (min_lag..=max_lag)
            .map(|k| {
                let mut num = 0.0;
                let mut e0 = 0.0;
                let mut ek = 0.0;
                for n in 0..frame {
                    num += seg[n] * seg[n + k];
                    e0 += seg[n] * seg[n];
                    ek += seg[n + k] * seg[n + k];
                }
                if e0 * ek > 0.0 {
                    num / (e0 * ek).sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn sine(hz: f64, n: usize) -> Signal {
        Signal::new(
            (0..n)
                .map(|i| 0.4 * (2.0 * PI * hz * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn fft_correlation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seg: Vec<f64> = (0..720).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = nccf(&seg, 400, 32, 320);
        let slow = brute_nccf(&seg, 400, 32, 320);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_at_200_hz_peaks_at_lag_80() {
        let s = sine(200.0, 16000);
        let seg = &s.samples()[1000..1720];
        let r = brute_nccf(seg, 400, 32, 320);
        let (j, _) = pick_lag(&r).unwrap();
        assert_eq!(j + 32, 80);

        let track = baseline_f0(&s, &FeatureConfig::default()).unwrap();
        let n = track.len();
        // Frames whose lag-extended segment is fully inside the signal.
        let interior = n - 320 / 80;
        for i in 0..interior {
            assert!(track.is_voiced(i), "frame {i}");
            assert!(
                (track.f0()[i] - 200.0).abs() <= 10.0,
                "frame {i}: {}",
                track.f0()[i]
            );
        }
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        for seed in 0..5 {
            let noise = crate::corpus::white_noise(16000, seed).unwrap();
            let noise =
                Signal::new(noise.samples().iter().map(|v| 0.1 * v).collect(), 16000).unwrap();
            let track = baseline_f0(&noise, &FeatureConfig::default()).unwrap();
            let unvoiced = (0..track.len()).filter(|&i| !track.is_voiced(i)).count();
            assert!(
                unvoiced as f64 >= 0.9 * track.len() as f64,
                "seed {seed}: {unvoiced}"
            );
        }
    }

    #[test]
    fn zeros_are_unvoiced() {
        let s = Signal::new(vec![0.0; 8000], 16000).unwrap();
        let track = baseline_f0(&s, &FeatureConfig::default()).unwrap();
        assert!(track.f0().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn octave_sanity_on_pure_tones() {
        let cfg = FeatureConfig::default();
        for hz in [60.0, 95.0, 130.0, 210.0, 333.0, 480.0] {
            let track = baseline_f0(&sine(hz, 8000), &cfg).unwrap();
            let voiced: Vec<f64> = track.f0().iter().copied().filter(|&f| f > 0.0).collect();
            assert!(!voiced.is_empty(), "{hz}");
            let ok = voiced
                .iter()
                .filter(|&&f| {
                    [hz, hz / 2.0, hz * 2.0]
                        .iter()
                        .any(|&t| (f - t).abs() <= 0.05 * t)
                })
                .count();
            assert!(
                ok as f64 >= 0.95 * voiced.len() as f64,
                "{hz}: {ok}/{}",
                voiced.len()
            );
        }
    }
}
