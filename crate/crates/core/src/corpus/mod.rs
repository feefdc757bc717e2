//! Synthetic speech-like corpus with exact ground-truth f0, seeded white
//! noise, and the on-disk dataset layout.

mod dataset;
mod noise;
mod synth;

pub use dataset::{build_dataset, format_snr, CorpusConfig, Dataset, UtteranceEntry, DATASET_FILE};
pub use noise::{derive_seed, splitmix64, white_noise};
pub use synth::{
    synthesize_utterance, Segment, SegmentKind, SynthConfig, Utterance, UtteranceSpec,
};
