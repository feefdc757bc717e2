//! Central finite-difference check of [`backward`](super::backward).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::Matrix;
use super::network::{loss_and_gradient, predict, sse_loss};
use super::weights::{init_random, Arch, LstmWeights};
use crate::corpus::derive_seed;
use crate::error::Result;

pub const FD_EPSILON: f64 = 1e-5;

/// `|a - b| / max(|a| + |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest relative error between `analytic` and central differences of the
/// sse loss, over every parameter of `w`.
pub fn max_relative_error(
    w: &LstmWeights,
    inputs: &Matrix,
    targets: &Matrix,
    analytic: &LstmWeights,
    eps: f64,
) -> Result<f64> {
    let mut probe = w.clone();
    let mut worst: f64 = 0.0;
    for i in 0..w.param_count() {
        let orig = w.param(i);
        *probe.param_mut(i) = orig + eps;
        let plus = sse_loss(&predict(&probe, inputs)?, targets)?;
        *probe.param_mut(i) = orig - eps;
        let minus = sse_loss(&predict(&probe, inputs)?, targets)?;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.param(i), numeric));
    }
    Ok(worst)
}

/// Random weights and a random sequence pair for `arch`, deterministic in `seed`.
pub fn gradcheck_fixture(
    arch: &Arch,
    seed: u64,
    seq_len: usize,
) -> Result<(LstmWeights, Matrix, Matrix)> {
    let w = init_random(arch, derive_seed(seed, &[0]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let mut draw = |rows: usize, cols: usize| {
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_vec(rows, cols, data)
    };
    let inputs = draw(seq_len, arch.input)?;
    let targets = draw(seq_len, arch.output)?;
    Ok((w, inputs, targets))
}

/// Builds random weights and data for `arch` and returns the worst relative
/// error of BPTT against central finite differences.
pub fn check_gradients(arch: &Arch, seed: u64, seq_len: usize) -> Result<f64> {
    let (w, inputs, targets) = gradcheck_fixture(arch, seed, seq_len)?;
    let (_, grad) = loss_and_gradient(&w, &inputs, &targets)?;
    max_relative_error(&w, &inputs, &targets, &grad, FD_EPSILON)
}
