use super::tensor::Tensor;
use crate::error::{shape, Error, Result};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

/// Per-feature scale/shift plus running statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

impl BatchNormState {
    /// gamma = 1, beta = 0, running mean 0, running variance 1.
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::filled(&[dim], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Fold the batch statistics of a training-mode forward into the running
    /// statistics.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

/// Biased per-feature statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: BnMode,
    xhat: Tensor,
    inv_std: Vec<f64>,
    stats: Option<BatchStats>,
}

impl BatchNormCache {
    pub fn stats(&self) -> Option<&BatchStats> {
        self.stats.as_ref()
    }
}

/// Normalizes each column of `x` (B×D). Training mode uses batch statistics
/// and reports them in the cache; the state itself is not modified.
pub fn batchnorm_forward(x: &Tensor, s: &BatchNormState, mode: BnMode) -> Result<(Tensor, BatchNormCache)> {
    let (b, d) = (x.rows(), x.cols());
    if d != s.dim() {
        return Err(shape(format!("batchnorm: width {d}, state {}", s.dim())));
    }
    let (mean, var) = match mode {
        BnMode::Train => {
            if b < 2 {
                return Err(Error::DegenerateBatch(format!("{b} rows in training mode")));
            }
            let mut mean = vec![0.0; d];
            for r in 0..b {
                mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= b as f64);
            let mut var = vec![0.0; d];
            for r in 0..b {
                for ((acc, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= b as f64);
            (mean, var)
        }
        BnMode::Infer => (s.running_mean.data().to_vec(), s.running_var.data().to_vec()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + s.epsilon).sqrt()).collect();
    let mut xhat = x.clone();
    let mut y = x.clone();
    for r in 0..b {
        let xr = xhat.row_mut(r);
        for j in 0..d {
            xr[j] = (xr[j] - mean[j]) * inv_std[j];
        }
        let yr = y.row_mut(r);
        for j in 0..d {
            yr[j] = s.gamma.data()[j] * xr[j] + s.beta.data()[j];
        }
    }
    let stats = (mode == BnMode::Train).then_some(BatchStats { mean, var });
    Ok((y, BatchNormCache { mode, xhat, inv_std, stats }))
}

/// Accumulates into `d_gamma`, `d_beta`; returns dL/dx.
pub fn batchnorm_backward(cache: &BatchNormCache, s: &BatchNormState, d_out: &Tensor, d_gamma: &mut Tensor, d_beta: &mut Tensor) -> Tensor {
    let (b, d) = (d_out.rows(), d_out.cols());
    let mut sum_dxhat = vec![0.0; d];
    let mut sum_dxhat_xhat = vec![0.0; d];
    for r in 0..b {
        let (g, xh) = (d_out.row(r), cache.xhat.row(r));
        for j in 0..d {
            d_gamma.data_mut()[j] += g[j] * xh[j];
            d_beta.data_mut()[j] += g[j];
            let dxhat = g[j] * s.gamma.data()[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * xh[j];
        }
    }
    let mut d_input = Tensor::zeros(&[b, d]);
    let n = b as f64;
    for r in 0..b {
        let (g, xh) = (d_out.row(r), cache.xhat.row(r));
        let out = d_input.row_mut(r);
        for j in 0..d {
            let dxhat = g[j] * s.gamma.data()[j];
            out[j] = match cache.mode {
                BnMode::Train => cache.inv_std[j] / n * (n * dxhat - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j]),
                BnMode::Infer => dxhat * cache.inv_std[j],
            };
        }
    }
    d_input
}
