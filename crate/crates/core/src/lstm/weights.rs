use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Layer widths of a stacked LSTM with a linear read-out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Arch {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self> {
        let a = Arch {
            input,
            hidden,
            output,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::InvalidArchitecture(
                "need at least one LSTM layer".into(),
            ));
        }
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "zero-width layer in {self}"
            )));
        }
        Ok(())
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input
        } else {
            self.hidden[layer - 1]
        }
    }

    pub fn top_hidden(&self) -> usize {
        *self.hidden.last().expect("validated arch has a layer")
    }

    pub fn param_count(&self) -> usize {
        (0..self.hidden.len())
            .map(|l| {
                let h = self.hidden[l];
                4 * h * (self.layer_input(l) + h + 1)
            })
            .sum::<usize>()
            + self.output * (self.top_hidden() + 1)
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        write!(f, "{}-[{}]-{}", self.input, hidden.join(","), self.output)
    }
}

/// Gate blocks inside the stacked `4H` rows of a layer's matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }

    pub fn rows(self, hidden: usize) -> Range<usize> {
        let k = self as usize;
        k * hidden..(k + 1) * hidden
    }
}

/// Parameters of one LSTM layer. Rows are stacked in [`Gate`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    /// `4H x input`
    pub w_x: Matrix,
    /// `4H x H`
    pub w_h: Matrix,
    /// `4H`
    pub bias: Vec<f64>,
}

impl LayerWeights {
    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    /// Input-to-hidden block of one gate (`H x input`), copied out.
    pub fn gate_input_matrix(&self, gate: Gate) -> Matrix {
        self.gate_rows(&self.w_x, gate)
    }

    /// Hidden-to-hidden block of one gate (`H x H`), copied out.
    pub fn gate_recurrent_matrix(&self, gate: Gate) -> Matrix {
        self.gate_rows(&self.w_h, gate)
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        &self.bias[gate.rows(self.hidden())]
    }

    fn gate_rows(&self, m: &Matrix, gate: Gate) -> Matrix {
        let rows: Vec<&[f64]> = gate.rows(self.hidden()).map(|r| m.row(r)).collect();
        Matrix::from_rows(&rows).expect("gate rows share a width")
    }
}

/// All trainable parameters: LSTM layers plus the output projection.
/// Gradients share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub arch: Arch,
    pub layers: Vec<LayerWeights>,
    /// `output x top_hidden`
    pub proj_w: Matrix,
    pub proj_b: Vec<f64>,
}

/// A named, shaped view of one parameter block.
pub struct ParamBlock<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl LstmWeights {
    pub fn zeros(arch: &Arch) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .hidden
            .iter()
            .enumerate()
            .map(|(l, &h)| LayerWeights {
                w_x: Matrix::zeros(4 * h, arch.layer_input(l)),
                w_h: Matrix::zeros(4 * h, h),
                bias: vec![0.0; 4 * h],
            })
            .collect();
        Ok(LstmWeights {
            arch: arch.clone(),
            layers,
            proj_w: Matrix::zeros(arch.output, arch.top_hidden()),
            proj_b: vec![0.0; arch.output],
        })
    }

    pub fn zeros_like(&self) -> Self {
        LstmWeights::zeros(&self.arch).expect("arch was validated on construction")
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            v.push(l.w_x.as_slice());
            v.push(l.w_h.as_slice());
            v.push(&l.bias);
        }
        v.push(self.proj_w.as_slice());
        v.push(&self.proj_b);
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            v.push(l.w_x.as_mut_slice());
            v.push(l.w_h.as_mut_slice());
            v.push(&mut l.bias);
        }
        v.push(self.proj_w.as_mut_slice());
        v.push(&mut self.proj_b);
        v
    }

    /// Blocks in serialization order.
    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut v = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            v.push(ParamBlock {
                name: format!("layer{i}.w_x"),
                shape: vec![l.w_x.rows(), l.w_x.cols()],
                data: l.w_x.as_slice(),
            });
            v.push(ParamBlock {
                name: format!("layer{i}.w_h"),
                shape: vec![l.w_h.rows(), l.w_h.cols()],
                data: l.w_h.as_slice(),
            });
            v.push(ParamBlock {
                name: format!("layer{i}.bias"),
                shape: vec![l.bias.len()],
                data: &l.bias,
            });
        }
        v.push(ParamBlock {
            name: "proj.w".into(),
            shape: vec![self.proj_w.rows(), self.proj_w.cols()],
            data: self.proj_w.as_slice(),
        });
        v.push(ParamBlock {
            name: "proj.b".into(),
            shape: vec![self.proj_b.len()],
            data: &self.proj_b,
        });
        v
    }

    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &LstmWeights, k: f64) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
    }

    pub fn l2_distance(&self, other: &LstmWeights) -> f64 {
        self.slices()
            .iter()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Flat parameter access, in [`LstmWeights::slices`] order.
    pub fn param(&self, mut index: usize) -> f64 {
        for s in self.slices() {
            if index < s.len() {
                return s[index];
            }
            index -= s.len();
        }
        panic!("parameter index out of range")
    }

    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for s in self.slices_mut() {
            if index < s.len() {
                return &mut s[index];
            }
            index -= s.len();
        }
        panic!("parameter index out of range")
    }
}

/// Uniform Glorot initialization, per gate block:
/// `U[-r, r]` with `r = sqrt(6 / (fan_in + fan_out))`. Forget-gate biases are
/// 1.0, every other bias 0.
pub fn init_random(arch: &Arch, seed: u64) -> Result<LstmWeights> {
    let mut w = LstmWeights::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (l, layer) in w.layers.iter_mut().enumerate() {
        let h = arch.hidden[l];
        let input = arch.layer_input(l);
        let rx = glorot(input, h);
        let rh = glorot(h, h);
        for gate in Gate::ALL {
            for r in gate.rows(h) {
                layer
                    .w_x
                    .row_mut(r)
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-rx..=rx));
                layer
                    .w_h
                    .row_mut(r)
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-rh..=rh));
            }
        }
        for r in Gate::Forget.rows(h) {
            layer.bias[r] = 1.0;
        }
    }
    let rp = glorot(arch.top_hidden(), arch.output);
    w.proj_w
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-rp..=rp));
    Ok(w)
}

pub(crate) fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
