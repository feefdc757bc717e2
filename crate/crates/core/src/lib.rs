//! f0 detection in noisy speech with LSTM networks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod init;
pub mod lstm;
pub mod metrics;
pub mod par;
pub mod signal;

pub use error::{Error, Result};
pub use par::Exec;
pub use signal::Signal;
