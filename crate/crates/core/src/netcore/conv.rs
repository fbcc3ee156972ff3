use super::tensor::{gemm, MatRef, Tensor};
use super::Activation;
use crate::error::{shape, Error, Result};

/// Saved state of a valid 1-D convolution.
#[derive(Debug, Clone)]
pub struct Conv1dCache {
    input: Tensor,
    output: Tensor,
    kernel_len: usize,
    activation: Activation,
}

impl Conv1dCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Which outputs are on the active side of the activation kink.
    pub fn signature(&self) -> impl Iterator<Item = u32> + '_ {
        self.output.data().iter().map(|&y| (y > 0.0) as u32)
    }
}

/// Valid convolution of `x` (T×D) with `kernel` (K×D×F) plus `bias` (F):
/// `y[t,f] = act(Σ_{k,d} x[t+k,d]·kernel[k,d,f] + bias[f])`.
pub fn conv1d_forward(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<(Tensor, Conv1dCache)> {
    let (t, d) = (x.rows(), x.cols());
    let ks = kernel.shape();
    if x.shape().len() != 2 || ks.len() != 3 || ks[1] != d || bias.len() != ks[2] {
        return Err(shape(format!(
            "conv1d: input {:?}, kernel {:?}, bias {:?}",
            x.shape(),
            ks,
            bias.shape()
        )));
    }
    let (k, f) = (ks[0], ks[2]);
    if t < k {
        return Err(Error::SequenceShorterThanKernel { len: t, kernel: k });
    }
    let out_len = t - k + 1;
    let mut y = Tensor::zeros(&[out_len, f]);
    for row in 0..out_len {
        y.row_mut(row).copy_from_slice(bias.data());
    }
    // Row t of the unfolded input is the contiguous window x[t..t+k, :], so
    // the im2col matrix is a strided view with row stride d.
    let windows = MatRef::strided(x.data(), out_len, k * d, d, 1);
    gemm(windows, MatRef::new(kernel.data(), k * d, f), y.data_mut(), f, 1.0);
    activation.apply(y.data_mut());
    Ok((
        y.clone(),
        Conv1dCache {
            input: x.clone(),
            output: y,
            kernel_len: k,
            activation,
        },
    ))
}

/// Accumulates kernel and bias gradients and returns the input gradient.
pub fn conv1d_backward(
    cache: &Conv1dCache,
    kernel: &Tensor,
    d_out: &Tensor,
    d_kernel: &mut Tensor,
    d_bias: &mut Tensor,
) -> Tensor {
    let (t, d) = (cache.input.rows(), cache.input.cols());
    let k = cache.kernel_len;
    let f = kernel.shape()[2];
    let out_len = t - k + 1;
    let mut d_pre = d_out.clone();
    cache.activation.backprop(cache.output.data(), d_pre.data_mut());

    for row in 0..out_len {
        for (db, g) in d_bias.data_mut().iter_mut().zip(d_pre.row(row)) {
            *db += g;
        }
    }
    let windows = MatRef::strided(cache.input.data(), out_len, k * d, d, 1);
    gemm(
        windows.t(),
        MatRef::new(d_pre.data(), out_len, f),
        d_kernel.data_mut(),
        f,
        1.0,
    );
    let mut d_windows = vec![0.0; out_len * k * d];
    gemm(
        MatRef::new(d_pre.data(), out_len, f),
        MatRef::new(kernel.data(), k * d, f).t(),
        &mut d_windows,
        k * d,
        0.0,
    );
    // Overlap-add the unfolded gradient back onto the input rows.
    let mut d_input = Tensor::zeros(&[t, d]);
    let dx = d_input.data_mut();
    for row in 0..out_len {
        let src = &d_windows[row * k * d..(row + 1) * k * d];
        for (acc, g) in dx[row * d..(row + k) * d].iter_mut().zip(src) {
            *acc += g;
        }
    }
    d_input
}
