//! Stacked LSTM with a linear read-out, trained by BPTT on sse.

mod format;
mod gradcheck;
mod matrix;
mod network;
mod normalize;
mod train;
mod weights;

pub use format::{InitKind, Model, Stage, FORMAT_VERSION, MAGIC};
pub use gradcheck::{
    check_gradients, gradcheck_fixture, max_relative_error, relative_error, FD_EPSILON,
};
pub use matrix::Matrix;
pub use network::{
    backward, forward, loss_and_gradient, predict, sse_loss, ForwardCache, LayerCache,
};
pub use normalize::Normalizer;
pub use train::{
    clip_gradient, dataset_sse, train, train_with_observer, EarlyStopping, EpochStats, Observation,
    Optimizer, SeqPair, StopReason, TrainConfig, TrainRecord,
};
pub use weights::{init_random, Arch, Gate, LayerWeights, LstmWeights, ParamBlock};
