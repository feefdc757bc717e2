//! Signal-level processing: noise mixing, MFCC framing and the
//! autocorrelation pitch tracker used as the "None" baseline.

mod features;
mod mix;
mod pitch;

pub use features::{
    dct2_ortho, extract_features, frame_count, idct2_ortho, Analyzer, FeatureConfig, Frame,
    MelFilterbank,
};
pub use mix::{measured_snr_db, mix_at_snr, noise_gain};
pub use pitch::{baseline_f0, nccf};
