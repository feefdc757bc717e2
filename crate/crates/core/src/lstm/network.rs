//! Forward pass, sse loss and backpropagation through time.
//!
//! Per layer and timestep, with gates stacked as `[i, f, o, g]`:
//!
//! ```text
//! z_t = W_x x_t + W_h h_{t-1} + b
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);   g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! States start at zero. Outputs are `P h_t + p` on the top layer.

use super::matrix::{gemm_ab, gemm_abt, gemm_atb, Matrix};
use super::weights::LstmWeights;
use crate::error::{Error, Result};

/// Activations of one layer over a whole sequence.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// `T x input`
    pub input: Matrix,
    /// Post-activation gates, `T x 4H`.
    pub gates: Matrix,
    /// `T x H`
    pub cell: Matrix,
    /// `tanh(cell)`, `T x H`
    pub cell_tanh: Matrix,
    /// `T x H`
    pub hidden: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    /// `T x output`
    pub outputs: Matrix,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.outputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.rows() == 0
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the network over `inputs` (`T x input`) and keeps every activation
/// needed by [`backward`].
pub fn forward(w: &LstmWeights, inputs: &Matrix) -> Result<ForwardCache> {
    if inputs.cols() != w.arch.input {
        return Err(Error::DimensionMismatch(format!(
            "input width {} does not match architecture input {}",
            inputs.cols(),
            w.arch.input
        )));
    }
    if inputs.rows() == 0 {
        return Err(Error::Empty("input sequence"));
    }
    if !inputs.is_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    let t_len = inputs.rows();
    let mut layers = Vec::with_capacity(w.layers.len());
    let mut x = inputs.clone();
    for layer in &w.layers {
        let h = layer.hidden();
        let mut gates = Matrix::zeros(t_len, 4 * h);
        for t in 0..t_len {
            gates.row_mut(t).copy_from_slice(&layer.bias);
        }
        gemm_abt(&x, &layer.w_x, 1.0, &mut gates);
        let mut cell = Matrix::zeros(t_len, h);
        let mut cell_tanh = Matrix::zeros(t_len, h);
        let mut hidden = Matrix::zeros(t_len, h);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in 0..t_len {
            let z = gates.row_mut(t);
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(layer.w_h.row(r), &h_prev);
            }
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = sigmoid(z[2 * h + j]);
                z[3 * h + j] = z[3 * h + j].tanh();
            }
            let (c_row, ct_row, h_row) = (cell.row_mut(t), cell_tanh.row_mut(t), hidden.row_mut(t));
            for j in 0..h {
                let c = z[h + j] * c_prev[j] + z[j] * z[3 * h + j];
                let ct = c.tanh();
                c_row[j] = c;
                ct_row[j] = ct;
                h_row[j] = z[2 * h + j] * ct;
            }
            h_prev.copy_from_slice(h_row);
            c_prev.copy_from_slice(c_row);
        }
        let next = hidden.clone();
        layers.push(LayerCache {
            input: std::mem::replace(&mut x, next),
            gates,
            cell,
            cell_tanh,
            hidden,
        });
    }
    let mut outputs = Matrix::zeros(t_len, w.arch.output);
    for t in 0..t_len {
        outputs.row_mut(t).copy_from_slice(&w.proj_b);
    }
    gemm_abt(&x, &w.proj_w, 1.0, &mut outputs);
    Ok(ForwardCache { layers, outputs })
}

/// Outputs only.
pub fn predict(w: &LstmWeights, inputs: &Matrix) -> Result<Matrix> {
    forward(w, inputs).map(|c| c.outputs)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_same_shape(outputs: &Matrix, targets: &Matrix) -> Result<()> {
    if outputs.shape() != targets.shape() {
        return Err(Error::DimensionMismatch(format!(
            "outputs {:?} vs targets {:?}",
            outputs.shape(),
            targets.shape()
        )));
    }
    Ok(())
}

/// Sum over timesteps and components of squared differences.
pub fn sse_loss(outputs: &Matrix, targets: &Matrix) -> Result<f64> {
    check_same_shape(outputs, targets)?;
    Ok(outputs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(o, t)| (o - t) * (o - t))
        .sum())
}

/// Exact gradient of [`sse_loss`] with respect to every parameter of `w`.
pub fn backward(w: &LstmWeights, cache: &ForwardCache, targets: &Matrix) -> Result<LstmWeights> {
    check_same_shape(&cache.outputs, targets)?;
    if cache.layers.len() != w.layers.len()
        || cache
            .layers
            .iter()
            .zip(&w.layers)
            .any(|(c, l)| c.hidden.cols() != l.hidden() || c.input.cols() != l.w_x.cols())
    {
        return Err(Error::DimensionMismatch(
            "forward cache was not produced by these weights".into(),
        ));
    }
    let t_len = targets.rows();
    let mut grad = w.zeros_like();

    let mut d_out = Matrix::zeros(t_len, w.arch.output);
    for ((d, o), y) in d_out
        .as_mut_slice()
        .iter_mut()
        .zip(cache.outputs.as_slice())
        .zip(targets.as_slice())
    {
        *d = 2.0 * (o - y);
    }
    let top = &cache.layers.last().expect("at least one layer").hidden;
    gemm_atb(&d_out, top, 0.0, &mut grad.proj_w);
    for t in 0..t_len {
        for (b, d) in grad.proj_b.iter_mut().zip(d_out.row(t)) {
            *b += d;
        }
    }
    // Gradient flowing into the hidden states of the current layer from above.
    let mut d_hidden = Matrix::zeros(t_len, w.arch.top_hidden());
    gemm_ab(&d_out, &w.proj_w, 0.0, &mut d_hidden);

    for (l, (layer, lc)) in w.layers.iter().zip(&cache.layers).enumerate().rev() {
        let h = layer.hidden();
        let mut d_z = Matrix::zeros(t_len, 4 * h);
        let mut dh_rec = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..t_len).rev() {
            let g = lc.gates.row(t);
            let ct = lc.cell_tanh.row(t);
            let dz = d_z.row_mut(t);
            for j in 0..h {
                let (i_g, f_g, o_g, c_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let c_prev = if t > 0 { lc.cell.get(t - 1, j) } else { 0.0 };
                let dh = d_hidden.get(t, j) + dh_rec[j];
                let d_o = dh * ct[j];
                let dc = dc_next[j] + dh * o_g * (1.0 - ct[j] * ct[j]);
                dz[j] = dc * c_g * i_g * (1.0 - i_g);
                dz[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                dz[2 * h + j] = d_o * o_g * (1.0 - o_g);
                dz[3 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                dc_next[j] = dc * f_g;
            }
            // dh_{t-1} = W_h^T dz_t
            dh_rec.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d != 0.0 {
                    for (acc, wv) in dh_rec.iter_mut().zip(layer.w_h.row(r)) {
                        *acc += d * wv;
                    }
                }
            }
        }
        let gl = &mut grad.layers[l];
        gemm_atb(&d_z, &lc.input, 0.0, &mut gl.w_x);
        if t_len > 1 {
            // Hidden states shifted by one step: row t holds h_{t-1}.
            let prev = Matrix::from_vec(
                t_len - 1,
                h,
                lc.hidden.as_slice()[..(t_len - 1) * h].to_vec(),
            )?;
            let dz_tail = Matrix::from_vec(t_len - 1, 4 * h, d_z.as_slice()[4 * h..].to_vec())?;
            gemm_atb(&dz_tail, &prev, 0.0, &mut gl.w_h);
        }
        for t in 0..t_len {
            for (b, d) in gl.bias.iter_mut().zip(d_z.row(t)) {
                *b += d;
            }
        }
        if l > 0 {
            let mut below = Matrix::zeros(t_len, layer.w_x.cols());
            gemm_ab(&d_z, &layer.w_x, 0.0, &mut below);
            d_hidden = below;
        }
    }
    Ok(grad)
}

/// Loss and gradient for one sequence pair.
pub fn loss_and_gradient(
    w: &LstmWeights,
    inputs: &Matrix,
    targets: &Matrix,
) -> Result<(f64, LstmWeights)> {
    let cache = forward(w, inputs)?;
    let loss = sse_loss(&cache.outputs, targets)?;
    let grad = backward(w, &cache, targets)?;
    Ok((loss, grad))
}
