use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{mean_power, Signal};

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a path of tags under `master`:
/// `s_0 = splitmix64(master)`, `s_{i+1} = splitmix64(s_i ^ tag_i)`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |s, &t| splitmix64(s ^ t))
}

/// Zero-mean Gaussian samples rescaled to exactly unit mean power, at 16 kHz.
pub fn white_noise(length: usize, seed: u64) -> Result<Signal> {
    white_noise_at(length, seed, 16000)
}

pub(crate) fn white_noise_at(length: usize, seed: u64, sample_rate: u32) -> Result<Signal> {
    if length == 0 {
        return Err(Error::Empty("noise length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = StandardNormal.sample_iter(&mut rng).take(length).collect();
    let p = mean_power(&samples);
    if p > 0.0 {
        let k = p.sqrt().recip();
        samples.iter_mut().for_each(|v| *v *= k);
    }
    Signal::new(samples, sample_rate)
}
