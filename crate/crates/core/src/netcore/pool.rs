use super::tensor::Tensor;
use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: [usize; 2],
    /// Flat input offset of the winner for every output element.
    argmax: Vec<usize>,
}

impl MaxPoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Non-overlapping max pooling over time. A trailing remainder shorter than
/// `pool` is dropped; ties go to the earliest timestep.
pub fn maxpool1d(x: &Tensor, pool: usize) -> Result<(Tensor, MaxPoolCache)> {
    let (t, f) = (x.rows(), x.cols());
    if pool == 0 || t < pool {
        return Err(invalid(format!("maxpool: {t} timesteps with pool {pool}")));
    }
    let out_len = t / pool;
    let mut y = Tensor::zeros(&[out_len, f]);
    let mut argmax = vec![0; out_len * f];
    let xd = x.data();
    for o in 0..out_len {
        for c in 0..f {
            let mut best = o * pool * f + c;
            for s in 1..pool {
                let idx = (o * pool + s) * f + c;
                if xd[idx] > xd[best] {
                    best = idx;
                }
            }
            y.data_mut()[o * f + c] = xd[best];
            argmax[o * f + c] = best;
        }
    }
    Ok((
        y,
        MaxPoolCache {
            input_shape: [t, f],
            argmax,
        },
    ))
}

pub fn maxpool1d_backward(cache: &MaxPoolCache, d_out: &Tensor) -> Tensor {
    let mut d_input = Tensor::zeros(&cache.input_shape);
    let dx = d_input.data_mut();
    for (&src, &g) in cache.argmax.iter().zip(d_out.data()) {
        dx[src] += g;
    }
    d_input
}
