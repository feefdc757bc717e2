use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::F0Track;
use crate::signal::Signal;

use super::pitch;

/// Analysis settings shared by the feature extractor and the pitch baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// `None` selects the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub f0_min: f64,
    pub f0_max: f64,
    /// Normalized autocorrelation peak a frame needs to count as voiced.
    pub voicing_threshold: f64,
    /// Lower clamp for every log energy (frame energy and mel energies).
    pub energy_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 16000,
            frame_ms: 25.0,
            hop_ms: 5.0,
            fft_size: None,
            n_mels: 26,
            n_mfcc: 13,
            f0_min: 50.0,
            f0_max: 500.0,
            voicing_threshold: 0.5,
            energy_floor: -20.0,
        }
    }
}

pub const MAX_MFCC: usize = 39;

impl FeatureConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn fft_len(&self) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.frame_len().next_power_of_two())
    }

    /// Width of a frame vector: log f0, energy and the MFCCs.
    pub fn feature_dim(&self) -> usize {
        2 + self.n_mfcc
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFeatureConfig(m));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        let (frame, hop) = (self.frame_len(), self.hop_len());
        if frame == 0 || hop == 0 {
            return bad(format!(
                "frame length {frame} and hop {hop} must be positive"
            ));
        }
        if hop > frame {
            return bad(format!("hop {hop} exceeds frame length {frame}"));
        }
        if self.fft_len() < frame {
            return bad(format!(
                "FFT size {} is smaller than the frame length {frame}",
                self.fft_len()
            ));
        }
        if self.n_mfcc == 0 || self.n_mfcc > MAX_MFCC {
            return bad(format!(
                "n_mfcc must be in 1..={MAX_MFCC}, got {}",
                self.n_mfcc
            ));
        }
        if self.n_mels < self.n_mfcc {
            return bad(format!(
                "{} mel filters cannot yield {} cepstral coefficients",
                self.n_mels, self.n_mfcc
            ));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max && self.f0_max < nyquist) {
            return bad(format!(
                "f0 range [{}, {}] must be increasing and below Nyquist",
                self.f0_min, self.f0_max
            ));
        }
        if !self.energy_floor.is_finite() {
            return bad("energy floor must be finite".into());
        }
        Ok(())
    }
}

/// Number of full frames that fit in `n_samples`.
pub fn frame_count(n_samples: usize, cfg: &FeatureConfig) -> usize {
    let (frame, hop) = (cfg.frame_len(), cfg.hop_len());
    if n_samples < frame || hop == 0 {
        0
    } else {
        (n_samples - frame) / hop + 1
    }
}

/// Per-frame feature vector. `log_f0` is exactly 0.0 on unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub log_f0: f64,
    pub energy: f64,
    pub mfcc: Vec<f64>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        2 + self.mfcc.len()
    }

    pub fn is_voiced(&self) -> bool {
        self.log_f0 != 0.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.log_f0);
        v.push(self.energy);
        v.extend_from_slice(&self.mfcc);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Frame> {
        if v.len() < 3 {
            return Err(Error::DimensionMismatch(format!(
                "frame vector needs at least 3 components, got {}",
                v.len()
            )));
        }
        Ok(Frame {
            log_f0: v[0],
            energy: v[1],
            mfcc: v[2..].to_vec(),
        })
    }

    /// Writes `frame_index,log_f0,energy,mfcc_0,...` CSV.
    pub fn write_csv(frames: &[Frame], path: &Path) -> Result<()> {
        let n_mfcc = frames.first().map_or(0, |f| f.mfcc.len());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "frame_index".to_string(),
            "log_f0".to_string(),
            "energy".to_string(),
        ];
        header.extend((0..n_mfcc).map(|k| format!("mfcc_{k}")));
        w.write_record(&header)?;
        for (i, f) in frames.iter().enumerate() {
            if f.mfcc.len() != n_mfcc {
                return Err(Error::DimensionMismatch(format!(
                    "frame {i} has {} MFCCs, expected {n_mfcc}",
                    f.mfcc.len()
                )));
            }
            let mut rec = vec![i.to_string()];
            rec.extend(f.to_vec().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<Frame>> {
        let mut r = csv::Reader::from_path(path)?;
        let mut frames = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let values = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidSignal(format!("{} row {i}: {e}", path.display())))?;
            frames.push(Frame::from_slice(&values)?);
        }
        Ok(frames)
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the HTK mel scale between 0 Hz and Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Corner frequencies: filter `m` rises over `edges[m]..edges[m+1]` and
    /// falls over `edges[m+1]..edges[m+2]`.
    edges: Vec<f64>,
    /// Dense weights per filter over bins `0..=fft_len/2`.
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_len: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = fft_len / 2 + 1;
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * sample_rate as f64 / fft_len as f64;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        MelFilterbank { edges, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    /// Frequency span `(low, high)` covered by filter `m`.
    pub fn band_hz(&self, m: usize) -> (f64, f64) {
        (self.edges[m], self.edges[m + 2])
    }

    pub fn apply(&self, power_spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(power_spectrum).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal type-II DCT of `x`, keeping the first `n_out` coefficients.
pub fn dct2_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Inverse of [`dct2_ortho`] for a full-length coefficient vector.
pub fn idct2_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len() as f64;
    (0..c.len())
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let scale = if k == 0 {
                        (1.0 / n).sqrt()
                    } else {
                        (2.0 / n).sqrt()
                    };
                    scale * v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
                })
                .sum()
        })
        .collect()
}

/// Precomputed window, FFT plan, filterbank and DCT basis for one config.
pub struct Analyzer {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: MelFilterbank,
    dct: Vec<Vec<f64>>,
}

impl Analyzer {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let frame = cfg.frame_len();
        let window = (0..frame)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (frame - 1).max(1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len());
        let filterbank = MelFilterbank::new(cfg.n_mels, cfg.fft_len(), cfg.sample_rate);
        let n = cfg.n_mels as f64;
        let dct = (0..cfg.n_mfcc)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / n).sqrt()
                } else {
                    (2.0 / n).sqrt()
                };
                (0..cfg.n_mels)
                    .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                    .collect()
            })
            .collect();
        Ok(Analyzer {
            cfg: cfg.clone(),
            window,
            fft,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    fn frame_slice<'a>(&self, samples: &'a [f64], index: usize) -> &'a [f64] {
        let start = index * self.cfg.hop_len();
        &samples[start..start + self.cfg.frame_len()]
    }

    /// Log of the Hann-windowed frame energy, clamped at the configured floor.
    pub fn log_energy(&self, frame: &[f64]) -> f64 {
        let e: f64 = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| (x * w) * (x * w))
            .sum();
        self.floored_log(e)
    }

    fn floored_log(&self, v: f64) -> f64 {
        v.ln().max(self.cfg.energy_floor)
    }

    /// `|X_k|^2` for `k = 0..=fft_len/2` of the windowed frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.cfg.fft_len();
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn mel_energies(&self, frame: &[f64]) -> Vec<f64> {
        self.filterbank.apply(&self.power_spectrum(frame))
    }

    /// Cepstrum of one frame: floored log mel energies through the DCT.
    pub fn mfcc(&self, frame: &[f64]) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .mel_energies(frame)
            .into_iter()
            .map(|e| self.floored_log(e))
            .collect();
        self.dct
            .iter()
            .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frames(&self, signal: &Signal, truth: Option<&F0Track>) -> Result<Vec<Frame>> {
        self.check_signal(signal)?;
        let n = frame_count(signal.len(), &self.cfg);
        let track = match truth {
            Some(t) if t.len() != n => {
                return Err(Error::DimensionMismatch(format!(
                    "truth track has {} frames, signal yields {n}",
                    t.len()
                )))
            }
            Some(t) => t.clone(),
            None => pitch::track(self, signal)?,
        };
        let samples = signal.samples();
        Ok((0..n)
            .map(|i| {
                let frame = self.frame_slice(samples, i);
                let f0 = track.f0()[i];
                Frame {
                    log_f0: if f0 > 0.0 { f0.ln() } else { 0.0 },
                    energy: self.log_energy(frame),
                    mfcc: self.mfcc(frame),
                }
            })
            .collect())
    }

    pub(crate) fn check_signal(&self, signal: &Signal) -> Result<()> {
        if signal.sample_rate() != self.cfg.sample_rate {
            return Err(Error::SampleRateMismatch(
                signal.sample_rate(),
                self.cfg.sample_rate,
            ));
        }
        if signal.len() < self.cfg.frame_len() {
            return Err(Error::InvalidSignal(format!(
                "{} samples is shorter than one frame ({})",
                signal.len(),
                self.cfg.frame_len()
            )));
        }
        Ok(())
    }
}

/// One [`Frame`] per hop position. With `truth` the log f0 slot comes from the
/// ground-truth track; without it the autocorrelation baseline fills it in.
pub fn extract_features(
    signal: &Signal,
    truth: Option<&F0Track>,
    cfg: &FeatureConfig,
) -> Result<Vec<Frame>> {
    Analyzer::new(cfg)?.frames(signal, truth)
}
