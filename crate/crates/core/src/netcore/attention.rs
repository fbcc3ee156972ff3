use rand::Rng;

use super::init::glorot_uniform;
use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{shape, Result};

/// Additive attention scoring `e_t = v · tanh(W h_t + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// D × D.
    pub w: Tensor,
    pub b: Tensor,
    pub v: Tensor,
}

impl AttentionParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: Tensor::zeros(&[dim, dim]),
            b: Tensor::zeros(&[dim]),
            v: Tensor::zeros(&[dim]),
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            w: glorot_uniform(&[dim, dim], dim, dim, rng),
            b: Tensor::zeros(&[dim]),
            v: glorot_uniform(&[dim], dim, 1, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor,
    /// tanh(W h_t + b), T × D.
    u: Tensor,
    alpha: Vec<f64>,
}

impl AttentionCache {
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Rescales each timestep by its attention weight: `Y[t] = alpha_t · H[t]`.
/// Returns `(Y, alpha, cache)`.
pub fn attention_forward(hseq: &Tensor, p: &AttentionParams) -> Result<(Tensor, Vec<f64>, AttentionCache)> {
    let (t_len, d) = (hseq.rows(), hseq.cols());
    if t_len == 0 || d != p.dim() || p.w.shape() != [d, d] || p.v.len() != d {
        return Err(shape(format!("attention: input {:?}, dim {}", hseq.shape(), p.dim())));
    }
    let mut u = Tensor::zeros(&[t_len, d]);
    for row in 0..t_len {
        u.row_mut(row).copy_from_slice(p.b.data());
    }
    gemm(MatRef::new(hseq.data(), t_len, d), MatRef::new(p.w.data(), d, d).t(), u.data_mut(), d, 1.0);
    u.data_mut().iter_mut().for_each(|x| *x = x.tanh());
    let scores: Vec<f64> = (0..t_len)
        .map(|t| u.row(t).iter().zip(p.v.data()).map(|(a, b)| a * b).sum())
        .collect();
    let alpha = softmax(&scores);
    let mut y = hseq.clone();
    for (t, &a) in alpha.iter().enumerate() {
        y.row_mut(t).iter_mut().for_each(|x| *x *= a);
    }
    Ok((
        y,
        alpha.clone(),
        AttentionCache {
            input: hseq.clone(),
            u,
            alpha,
        },
    ))
}

/// Accumulates into `grads` and returns dL/dH.
pub fn attention_backward(cache: &AttentionCache, p: &AttentionParams, d_out: &Tensor, grads: &mut AttentionParams) -> Tensor {
    let (t_len, d) = (cache.input.rows(), cache.input.cols());
    let alpha = &cache.alpha;
    let d_alpha: Vec<f64> = (0..t_len)
        .map(|t| d_out.row(t).iter().zip(cache.input.row(t)).map(|(a, b)| a * b).sum())
        .collect();
    let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
    let d_score: Vec<f64> = alpha.iter().zip(&d_alpha).map(|(a, g)| a * (g - weighted)).collect();

    let mut d_input = d_out.clone();
    for (t, &a) in alpha.iter().enumerate() {
        d_input.row_mut(t).iter_mut().for_each(|x| *x *= a);
    }
    // d(pre) = d_score_t · v ⊙ (1 − u²)
    let mut d_pre = Tensor::zeros(&[t_len, d]);
    for t in 0..t_len {
        let u = cache.u.row(t);
        let gv = grads.v.data_mut();
        for j in 0..d {
            gv[j] += d_score[t] * u[j];
        }
        let row = d_pre.row_mut(t);
        for j in 0..d {
            row[j] = d_score[t] * p.v.data()[j] * (1.0 - u[j] * u[j]);
        }
    }
    for t in 0..t_len {
        for (b, g) in grads.b.data_mut().iter_mut().zip(d_pre.row(t)) {
            *b += g;
        }
    }
    let dp = MatRef::new(d_pre.data(), t_len, d);
    gemm(dp.t(), MatRef::new(cache.input.data(), t_len, d), grads.w.data_mut(), d, 1.0);
    gemm(dp, MatRef::new(p.w.data(), d, d), d_input.data_mut(), d, 1.0);
    d_input
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_attention() {
        let h = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![-1.0, 0.5], vec![0.0, 8.0]]).unwrap();
        let mut p = AttentionParams::zeros(2);
        p.v = Tensor::vector(vec![0.3, -2.0]);
        let (y, alpha, _) = attention_forward(&h, &p).unwrap();
        assert!(alpha.iter().all(|&a| (a - 0.25).abs() < 1e-15));
        for (a, b) in y.data().iter().zip(h.data()) {
            assert!((a - b / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_of_log_three() {
        let a = softmax(&[0.0, 3f64.ln()]);
        assert!((a[0] - 0.25).abs() < 1e-15 && (a[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_large_scores() {
        let a = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|x| x.is_finite() && *x >= 0.0));
    }
}
