use std::path::Path;

use crate::error::{Error, Result};

/// Mono sampled waveform. Amplitudes are nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    /// Builds a signal, rejecting an empty buffer, a zero rate or non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidSignal("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Rounds every sample to the 16-bit PCM grid (with clipping), so that a
    /// WAV round trip reproduces the signal exactly.
    pub fn quantized_pcm16(&self) -> Signal {
        Signal {
            samples: self
                .samples
                .iter()
                .map(|&s| pcm16_from_f64(s) as f64 / PCM16_SCALE)
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Writes a single-channel 16-bit little-endian PCM WAV file.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample(pcm16_from_f64(s))?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Reads a single-channel 16-bit PCM WAV file.
    pub fn read_wav(path: &Path) -> Result<Signal> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1
            || spec.bits_per_sample != 16
            || spec.sample_format != hound::SampleFormat::Int
        {
            return Err(Error::InvalidSignal(format!(
                "{}: expected mono 16-bit PCM, got {} ch / {} bit",
                path.display(),
                spec.channels,
                spec.bits_per_sample
            )));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Signal::new(samples, spec.sample_rate)
    }
}

const PCM16_SCALE: f64 = 32768.0;

fn pcm16_from_f64(s: f64) -> i16 {
    (s * PCM16_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub(crate) fn mean_power(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}
