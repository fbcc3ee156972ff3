//! LSTM cell, single-direction sequence scan with backpropagation through
//! time, and the bidirectional wrapper.
//!
//! Gate order inside every 4H block is `[input, forget, cell candidate, output]`.

use rand::Rng;

use super::init::{glorot_uniform, orthogonal};
use super::tensor::{gemm, MatRef, Tensor};
use super::{sigmoid, LSTM_GATES};
use crate::error::{shape, Result};

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights, 4H × D.
    pub w: Tensor,
    /// Recurrent weights, 4H × H.
    pub u: Tensor,
    /// Bias, 4H.
    pub b: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Tensor::zeros(&[LSTM_GATES * hidden, input_dim]),
            u: Tensor::zeros(&[LSTM_GATES * hidden, hidden]),
            b: Tensor::zeros(&[LSTM_GATES * hidden]),
        }
    }

    /// Glorot-uniform input weights, orthogonal recurrent weights, zero bias
    /// except 1.0 on the forget gate.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let w = glorot_uniform(&[LSTM_GATES * hidden, input_dim], input_dim, LSTM_GATES * hidden, rng);
        let u = orthogonal(LSTM_GATES * hidden, hidden, rng);
        let mut b = Tensor::zeros(&[LSTM_GATES * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(1.0);
        Self { w, u, b }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden())
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        if self.w.rows() != 4 * h || self.u.rows() != 4 * h || self.b.len() != 4 * h {
            return Err(shape(format!(
                "lstm params w {:?}, u {:?}, b {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }
}

/// Turn preactivations into gate activations in place.
fn activate_gates(z: &mut [f64], h: usize) {
    for (i, v) in z.iter_mut().enumerate() {
        *v = if (2 * h..3 * h).contains(&i) { v.tanh() } else { sigmoid(*v) };
    }
}

/// c = f⊙c_prev + i⊙g, h = o⊙tanh(c). Writes c, tanh(c) and h.
fn cell_update(gates: &[f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h_out: &mut [f64]) {
    let h = c.len();
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h_out[j] = o * tanh_c[j];
    }
}

/// Backward through one cell given dL/dh and the carried dL/dc. Writes the
/// preactivation gradient into `dz` and returns dL/dc_prev in `dc`.
fn cell_backward(gates: &[f64], c_prev: &[f64], tanh_c: &[f64], dh: &[f64], dc: &mut [f64], dz: &mut [f64]) {
    let h = dh.len();
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        let d_o = dh[j] * tanh_c[j];
        let d_c = dc[j] + dh[j] * o * (1.0 - tanh_c[j] * tanh_c[j]);
        dz[j] = d_c * g * i * (1.0 - i);
        dz[h + j] = d_c * c_prev[j] * f * (1.0 - f);
        dz[2 * h + j] = d_c * i * (1.0 - g * g);
        dz[3 * h + j] = d_o * o * (1.0 - o);
        dc[j] = d_c * f;
    }
}

/// Saved state of a single cell step.
#[derive(Debug, Clone)]
pub struct LstmCellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One LSTM step. Returns `(h_t, c_t)`.
pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams) -> Result<(Vec<f64>, Vec<f64>, LstmCellCache)> {
    p.check()?;
    let h = p.hidden();
    if x.len() != p.input_dim() || h_prev.len() != h || c_prev.len() != h {
        return Err(shape("lstm_cell: state or input size"));
    }
    let mut z = p.b.data().to_vec();
    gemm(MatRef::new(p.w.data(), 4 * h, x.len()), MatRef::new(x, x.len(), 1), &mut z, 1, 1.0);
    gemm(MatRef::new(p.u.data(), 4 * h, h), MatRef::new(h_prev, h, 1), &mut z, 1, 1.0);
    activate_gates(&mut z, h);
    let (mut c, mut tanh_c, mut h_out) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
    cell_update(&z, c_prev, &mut c, &mut tanh_c, &mut h_out);
    let cache = LstmCellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        tanh_c,
    };
    Ok((h_out, c, cache))
}

/// Gradients flowing out of one cell step.
#[derive(Debug, Clone)]
pub struct LstmCellGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Accumulates parameter gradients into `grads`.
pub fn lstm_cell_backward(cache: &LstmCellCache, p: &LstmParams, dh: &[f64], dc: &[f64], grads: &mut LstmParams) -> LstmCellGrads {
    let h = p.hidden();
    let d = p.input_dim();
    let mut dz = vec![0.0; 4 * h];
    let mut dc_prev = dc.to_vec();
    cell_backward(&cache.gates, &cache.c_prev, &cache.tanh_c, dh, &mut dc_prev, &mut dz);
    let dzm = MatRef::new(&dz, 4 * h, 1);
    gemm(dzm, MatRef::new(&cache.x, 1, d), grads.w.data_mut(), d, 1.0);
    gemm(dzm, MatRef::new(&cache.h_prev, 1, h), grads.u.data_mut(), h, 1.0);
    grads.b.add_scaled(1.0, &Tensor::vector(dz.clone()));
    let mut dx = vec![0.0; d];
    gemm(MatRef::new(&dz, 1, 4 * h), MatRef::new(p.w.data(), 4 * h, d), &mut dx, d, 0.0);
    let mut dh_prev = vec![0.0; h];
    gemm(MatRef::new(&dz, 1, 4 * h), MatRef::new(p.u.data(), 4 * h, h), &mut dh_prev, h, 0.0);
    LstmCellGrads { dx, dh_prev, dc_prev }
}

/// Saved state of a full scan in one direction. All buffers are indexed by
/// sequence position, not by processing step.
#[derive(Debug, Clone)]
pub struct LstmSeqCache {
    input: Tensor,
    reverse: bool,
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_c: Vec<f64>,
    hidden: Vec<f64>,
}

/// Scan `x` (T×D) from zero state. With `reverse` the scan runs from the last
/// timestep to the first; output row t is always the state after visiting t.
pub fn lstm_sequence(x: &Tensor, p: &LstmParams, reverse: bool) -> Result<(Tensor, LstmSeqCache)> {
    p.check()?;
    let (t_len, d) = (x.rows(), x.cols());
    if d != p.input_dim() {
        return Err(shape(format!("lstm input width {d}, expected {}", p.input_dim())));
    }
    let h = p.hidden();
    let g4 = 4 * h;
    let mut gates = vec![0.0; t_len * g4];
    for row in gates.chunks_mut(g4) {
        row.copy_from_slice(p.b.data());
    }
    gemm(MatRef::new(x.data(), t_len, d), MatRef::new(p.w.data(), g4, d).t(), &mut gates, g4, 1.0);

    let mut cells = vec![0.0; t_len * h];
    let mut tanh_c = vec![0.0; t_len * h];
    let mut hidden = vec![0.0; t_len * h];
    let zeros = vec![0.0; h];
    let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
    let mut prev: Option<usize> = None;
    for &t in &order {
        let (h_prev, c_prev) = match prev {
            Some(s) => (hidden[s * h..(s + 1) * h].to_vec(), cells[s * h..(s + 1) * h].to_vec()),
            None => (zeros.clone(), zeros.clone()),
        };
        let z = &mut gates[t * g4..(t + 1) * g4];
        gemm(MatRef::new(p.u.data(), g4, h), MatRef::new(&h_prev, h, 1), z, 1, 1.0);
        activate_gates(z, h);
        cell_update(
            &gates[t * g4..(t + 1) * g4],
            &c_prev,
            &mut cells[t * h..(t + 1) * h],
            &mut tanh_c[t * h..(t + 1) * h],
            &mut hidden[t * h..(t + 1) * h],
        );
        prev = Some(t);
    }
    let out = Tensor::from_vec(&[t_len, h], hidden.clone())?;
    Ok((
        out,
        LstmSeqCache {
            input: x.clone(),
            reverse,
            gates,
            cells,
            tanh_c,
            hidden,
        },
    ))
}

/// Backpropagation through time. Accumulates into `grads` and returns dL/dx.
pub fn lstm_sequence_backward(cache: &LstmSeqCache, p: &LstmParams, d_out: &Tensor, grads: &mut LstmParams) -> Tensor {
    let (t_len, d) = (cache.input.rows(), cache.input.cols());
    let h = p.hidden();
    let g4 = 4 * h;
    let order: Vec<usize> = if cache.reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };

    let mut dz_all = vec![0.0; t_len * g4];
    // h_{t-1} in processing order, aligned with dz_all rows.
    let mut h_prev_all = vec![0.0; t_len * h];
    let mut dh_next = vec![0.0; h];
    let mut dc = vec![0.0; h];
    let zeros = vec![0.0; h];
    let mut dh = vec![0.0; h];
    for step in (0..t_len).rev() {
        let t = order[step];
        let prev = if step > 0 { Some(order[step - 1]) } else { None };
        let c_prev = match prev {
            Some(s) => &cache.cells[s * h..(s + 1) * h],
            None => &zeros[..],
        };
        if let Some(s) = prev {
            h_prev_all[t * h..(t + 1) * h].copy_from_slice(&cache.hidden[s * h..(s + 1) * h]);
        }
        for j in 0..h {
            dh[j] = d_out.data()[t * h + j] + dh_next[j];
        }
        let dz = &mut dz_all[t * g4..(t + 1) * g4];
        cell_backward(
            &cache.gates[t * g4..(t + 1) * g4],
            c_prev,
            &cache.tanh_c[t * h..(t + 1) * h],
            &dh,
            &mut dc,
            dz,
        );
        // dh_prev = Uᵀ dz
        gemm(MatRef::new(dz, 1, g4), MatRef::new(p.u.data(), g4, h), &mut dh_next, h, 0.0);
    }

    let dzm = MatRef::new(&dz_all, t_len, g4);
    gemm(dzm.t(), MatRef::new(cache.input.data(), t_len, d), grads.w.data_mut(), d, 1.0);
    gemm(dzm.t(), MatRef::new(&h_prev_all, t_len, h), grads.u.data_mut(), h, 1.0);
    for row in dz_all.chunks(g4) {
        for (b, g) in grads.b.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut d_input = Tensor::zeros(&[t_len, d]);
    gemm(dzm, MatRef::new(p.w.data(), g4, d), d_input.data_mut(), d, 0.0);
    d_input
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmSeqCache,
    bwd: LstmSeqCache,
}

/// Output row t is `[h_fwd[t], h_bwd[t]]`, width 2H.
pub fn bilstm_forward(seq: &Tensor, fwd: &LstmParams, bwd: &LstmParams) -> Result<(Tensor, BiLstmCache)> {
    if fwd.hidden() != bwd.hidden() {
        return Err(shape("bilstm directions differ in hidden size"));
    }
    let (hf, cf) = lstm_sequence(seq, fwd, false)?;
    let (hb, cb) = lstm_sequence(seq, bwd, true)?;
    let h = fwd.hidden();
    let t_len = seq.rows();
    let mut out = Tensor::zeros(&[t_len, 2 * h]);
    for t in 0..t_len {
        let row = out.row_mut(t);
        row[..h].copy_from_slice(hf.row(t));
        row[h..].copy_from_slice(hb.row(t));
    }
    Ok((out, BiLstmCache { fwd: cf, bwd: cb }))
}

pub fn bilstm_backward(
    cache: &BiLstmCache,
    fwd: &LstmParams,
    bwd: &LstmParams,
    d_out: &Tensor,
    g_fwd: &mut LstmParams,
    g_bwd: &mut LstmParams,
) -> Tensor {
    let h = fwd.hidden();
    let t_len = d_out.rows();
    let mut df = Tensor::zeros(&[t_len, h]);
    let mut db = Tensor::zeros(&[t_len, h]);
    for t in 0..t_len {
        let row = d_out.row(t);
        df.row_mut(t).copy_from_slice(&row[..h]);
        db.row_mut(t).copy_from_slice(&row[h..]);
    }
    let mut dx = lstm_sequence_backward(&cache.fwd, fwd, &df, g_fwd);
    dx.add_scaled(1.0, &lstm_sequence_backward(&cache.bwd, bwd, &db, g_bwd));
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c, cache) = lstm_cell(&[0.3, -1.0, 2.0], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
        assert_eq!(cache.gates, vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn zero_params_decay_cell() {
        let p = LstmParams::zeros(1, 2);
        let (h, c, _) = lstm_cell(&[4.0], &[0.0; 2], &[2.0, -1.0], &p).unwrap();
        assert_eq!(c, vec![1.0, -0.5]);
        assert_eq!(h, vec![0.5 * 1.0f64.tanh(), 0.5 * (-0.5f64).tanh()]);
    }

    #[test]
    fn forget_bias_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::init(5, 3, &mut rng);
        assert_eq!(&p.b.data()[3..6], &[1.0; 3]);
        assert!(p.b.data()[..3].iter().chain(&p.b.data()[6..]).all(|&v| v == 0.0));
    }

    #[test]
    fn sequence_matches_repeated_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = LstmParams::init(3, 4, &mut rng);
        let x = Tensor::from_rows(&[vec![0.1, 0.2, -0.3], vec![1.0, 0.0, 0.5], vec![-0.4, 0.9, 0.2]]).unwrap();
        let (seq, _) = lstm_sequence(&x, &p, true).unwrap();
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for t in (0..3).rev() {
            let (h2, c2, _) = lstm_cell(x.row(t), &h, &c, &p).unwrap();
            for (a, b) in seq.row(t).iter().zip(&h2) {
                assert!((a - b).abs() < 1e-14);
            }
            h = h2;
            c = c2;
        }
    }

    #[test]
    fn bilstm_shape_and_zero_params() {
        let x = Tensor::filled(&[48, 128], 0.3);
        let p = LstmParams::zeros(128, 64);
        let (y, _) = bilstm_forward(&x, &p, &p).unwrap();
        assert_eq!(y.shape(), &[48, 128]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn palindrome_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::init(2, 3, &mut rng);
        let x = Tensor::from_rows(&[
            vec![0.1, 0.5],
            vec![-0.7, 0.2],
            vec![0.4, 0.4],
            vec![-0.7, 0.2],
            vec![0.1, 0.5],
        ])
        .unwrap();
        let (y, _) = bilstm_forward(&x, &p, &p).unwrap();
        for t in 0..5 {
            let a = &y.row(t)[..3];
            let b = &y.row(4 - t)[3..];
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }
}
