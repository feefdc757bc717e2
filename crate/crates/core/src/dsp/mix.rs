use crate::error::{Error, Result};
use crate::signal::{mean_power, Signal};

/// Gain `g` such that `10 log10(P_clean / P_{g * noise}) == target_snr_db`,
/// with both powers measured over the clean signal's duration.
pub fn noise_gain(clean: &Signal, noise: &Signal, target_snr_db: f64) -> Result<f64> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::SampleRateMismatch(
            clean.sample_rate(),
            noise.sample_rate(),
        ));
    }
    if noise.len() < clean.len() {
        return Err(Error::NoiseTooShort {
            noise: noise.len(),
            clean: clean.len(),
        });
    }
    if !target_snr_db.is_finite() {
        return Err(Error::NonFinite(format!("target SNR {target_snr_db}")));
    }
    let p_clean = clean.power();
    if p_clean == 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    let p_noise = mean_power(&noise.samples()[..clean.len()]);
    if p_noise == 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    Ok((p_clean / (p_noise * 10f64.powf(target_snr_db / 10.0))).sqrt())
}

/// Additive mixture `y = x + g * d` at the requested SNR. Only the first
/// `clean.len()` noise samples are used.
pub fn mix_at_snr(clean: &Signal, noise: &Signal, target_snr_db: f64) -> Result<Signal> {
    let g = noise_gain(clean, noise, target_snr_db)?;
    let samples = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(x, d)| x + g * d)
        .collect();
    Signal::new(samples, clean.sample_rate())
}

/// SNR of a mixture measured from its components: the noise term is `noisy - clean`.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let n = clean.len().min(noisy.len());
    let noise: Vec<f64> = (0..n).map(|i| noisy[i] - clean[i]).collect();
    10.0 * (mean_power(&clean[..n]) / mean_power(&noise)).log10()
}
