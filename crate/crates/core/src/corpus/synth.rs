//! Source-filter synthesizer for speech-like utterances with known f0.
//!
//! Voiced segments are a sawtooth at the contour's instantaneous f0 passed
//! through a cascade of three two-pole formant resonators; unvoiced segments
//! are either differentiated noise bursts or digital silence.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{frame_count, FeatureConfig};
use crate::error::{Error, Result};
use crate::metrics::F0Track;
use crate::signal::Signal;

use super::noise::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_min: f64,
    pub duration_max: f64,
    /// Range of the per-utterance speaker base f0.
    pub base_f0_min: f64,
    pub base_f0_max: f64,
    /// RMS the whole clean utterance is scaled to.
    pub target_rms: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration_min: 2.0,
            duration_max: 4.0,
            base_f0_min: 90.0,
            base_f0_max: 260.0,
            target_rms: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Linear f0 glide from `f0_start` to `f0_end` (Hz).
    Voiced {
        f0_start: f64,
        f0_end: f64,
    },
    Noise,
    Silence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration: f64,
}

/// Segment plan for one utterance plus the f0 bounds it must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpec {
    pub id: String,
    pub sample_rate: u32,
    pub f0_min: f64,
    pub f0_max: f64,
    /// RMS of the rendered waveform.
    pub rms: f64,
    pub segments: Vec<Segment>,
}

impl UtteranceSpec {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Draws a plan: leading silence, then voiced stretches separated by short
    /// noise bursts or pauses, then trailing silence.
    pub fn random<R: Rng>(
        id: impl Into<String>,
        rng: &mut R,
        synth: &SynthConfig,
        features: &FeatureConfig,
    ) -> Self {
        let (lo, hi) = (features.f0_min * 1.1, features.f0_max * 0.9);
        let total = if synth.duration_max > synth.duration_min {
            rng.random_range(synth.duration_min..synth.duration_max)
        } else {
            synth.duration_min
        };
        let base = rng.random_range(synth.base_f0_min..=synth.base_f0_max);
        let mut segments = vec![Segment {
            kind: SegmentKind::Silence,
            duration: rng.random_range(0.08..0.2),
        }];
        let mut used = segments[0].duration;
        let tail = 0.1;
        loop {
            let mut voiced: f64 = rng.random_range(0.15..0.45);
            if segments.len() == 1 {
                voiced = voiced.min(total - used - tail);
            }
            if voiced < 0.05 || used + voiced + tail > total {
                break;
            }
            let f0_start = (base * rng.random_range(0.85..1.2)).clamp(lo, hi);
            let f0_end = (f0_start * rng.random_range(0.8..1.25)).clamp(lo, hi);
            segments.push(Segment {
                kind: SegmentKind::Voiced { f0_start, f0_end },
                duration: voiced,
            });
            used += voiced;
            let gap = if rng.random_bool(0.5) {
                Segment {
                    kind: SegmentKind::Noise,
                    duration: rng.random_range(0.04..0.12),
                }
            } else {
                Segment {
                    kind: SegmentKind::Silence,
                    duration: rng.random_range(0.04..0.15),
                }
            };
            if used + gap.duration + tail > total {
                break;
            }
            used += gap.duration;
            segments.push(gap);
        }
        segments.push(Segment {
            kind: SegmentKind::Silence,
            duration: (total - used).max(tail),
        });
        UtteranceSpec {
            id: id.into(),
            sample_rate: features.sample_rate,
            f0_min: features.f0_min,
            f0_max: features.f0_max,
            rms: synth.target_rms,
            segments,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidUtteranceSpec(format!("{}: {m}", self.id)));
        if self.sample_rate == 0 {
            return bad("zero sample rate".into());
        }
        if self.segments.iter().any(|s| !(s.duration >= 0.0)) {
            return bad("negative segment duration".into());
        }
        if !(self.rms > 0.0 && self.rms < 0.5) {
            return bad(format!("rms {} outside (0, 0.5)", self.rms));
        }
        if !(self.duration() > 0.0) {
            return bad("zero duration".into());
        }
        for s in &self.segments {
            if let SegmentKind::Voiced { f0_start, f0_end } = s.kind {
                for f in [f0_start, f0_end] {
                    if !(f >= self.f0_min && f <= self.f0_max) {
                        return bad(format!(
                            "contour value {f} Hz outside [{}, {}]",
                            self.f0_min, self.f0_max
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sample boundaries `[start, end)` of every segment.
    fn spans(&self) -> Vec<(usize, usize)> {
        let sr = self.sample_rate as f64;
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = (t * sr).round() as usize;
                t += s.duration;
                (start, (t * sr).round() as usize)
            })
            .collect()
    }
}

/// Ground-truth f0 at `sample` inside segment `[start, end)`.
fn contour(kind: SegmentKind, start: usize, end: usize, sample: usize) -> f64 {
    match kind {
        SegmentKind::Voiced { f0_start, f0_end } => {
            let len = (end - start).max(1) as f64;
            f0_start + (f0_end - f0_start) * (sample - start) as f64 / len
        }
        _ => 0.0,
    }
}

/// A synthesized utterance. `noisy` holds mixtures keyed by SNR in dB.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub clean: Signal,
    pub truth_f0: F0Track,
    pub noisy: Vec<(f64, Signal)>,
}

/// Two-pole resonator `y[n] = (1 - r) x[n] + 2 r cos(w) y[n-1] - r^2 y[n-2]`.
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
}

impl Resonator {
    fn new(center: f64, bandwidth: f64, sr: f64) -> Self {
        let r = (-PI * bandwidth / sr).exp();
        Resonator {
            b0: 1.0 - r,
            a1: 2.0 * r * (2.0 * PI * center / sr).cos(),
            a2: -r * r,
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b0 * *v + self.a1 * y1 + self.a2 * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

const RAMP_SECS: f64 = 0.015;
const NOISE_LEVEL: f64 = 0.3;

/// Renders `spec` and records the frame-level truth track for the framing in
/// `features`. Frame `i` takes the contour value at its center sample.
pub fn synthesize_utterance(
    spec: &UtteranceSpec,
    seed: u64,
    features: &FeatureConfig,
) -> Result<Utterance> {
    spec.validate()?;
    if spec.sample_rate != features.sample_rate {
        return Err(Error::SampleRateMismatch(
            spec.sample_rate,
            features.sample_rate,
        ));
    }
    let sr = spec.sample_rate as f64;
    let spans = spec.spans();
    let n = spans.last().map_or(0, |s| s.1);
    if n < features.frame_len() {
        return Err(Error::InvalidUtteranceSpec(format!(
            "{}: {n} samples is shorter than one analysis frame",
            spec.id
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5f0]));
    let formants = [
        (
            rng.random_range(300.0..900.0),
            rng.random_range(60.0..150.0),
        ),
        (
            rng.random_range(900.0..2200.0),
            rng.random_range(80.0..200.0),
        ),
        (
            rng.random_range(2200.0..3500.0),
            rng.random_range(100.0..250.0),
        ),
    ];
    let mut voiced = vec![0.0; n];
    let mut unvoiced = vec![0.0; n];
    let ramp = (RAMP_SECS * sr) as usize;
    let mut phase: f64 = rng.random_range(0.0..1.0);
    for (seg, &(start, end)) in spec.segments.iter().zip(&spans) {
        let len = end - start;
        let envelope = |i: usize| {
            let edge = i.min(len - 1 - i);
            if edge >= ramp {
                1.0
            } else {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            }
        };
        match seg.kind {
            SegmentKind::Voiced { .. } => {
                for i in 0..len {
                    let f0 = contour(seg.kind, start, end, start + i);
                    voiced[start + i] = envelope(i) * (1.0 - 2.0 * phase);
                    phase = (phase + f0 / sr).fract();
                }
            }
            SegmentKind::Noise => {
                let mut prev = 0.0;
                for i in 0..len {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    unvoiced[start + i] = envelope(i) * (w - prev);
                    prev = w;
                }
            }
            SegmentKind::Silence => {}
        }
    }
    for (center, bw) in formants {
        Resonator::new(center, bw, sr).run(&mut voiced);
    }
    let rms = |x: &[f64]| {
        let active: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
        if active.is_empty() {
            0.0
        } else {
            (active.iter().map(|v| v * v).sum::<f64>() / active.len() as f64).sqrt()
        }
    };
    let (rv, ru) = (rms(&voiced), rms(&unvoiced));
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let v = if rv > 0.0 { voiced[i] / rv } else { 0.0 };
            let u = if ru > 0.0 {
                NOISE_LEVEL * unvoiced[i] / ru
            } else {
                0.0
            };
            v + u
        })
        .collect();
    let total = (samples.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if total > 0.0 {
        let k = spec.rms / total;
        samples.iter_mut().for_each(|v| *v *= k);
    }
    let clean = Signal::new(samples, spec.sample_rate)?.quantized_pcm16();

    let frames = frame_count(n, features);
    let (frame, hop) = (features.frame_len(), features.hop_len());
    let truth = (0..frames)
        .map(|i| {
            let center = i * hop + frame / 2;
            spec.segments
                .iter()
                .zip(&spans)
                .find(|(_, &(s, e))| center >= s && center < e)
                .map_or(0.0, |(seg, &(s, e))| contour(seg.kind, s, e, center))
        })
        .collect();
    Ok(Utterance {
        id: spec.id.clone(),
        clean,
        truth_f0: F0Track::new(truth)?,
        noisy: Vec::new(),
    })
}
