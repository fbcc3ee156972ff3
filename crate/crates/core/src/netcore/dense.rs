use super::tensor::{gemm, MatRef, Tensor};
use super::Activation;
use crate::error::{shape, Result};

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
    output: Tensor,
    activation: Activation,
}

impl DenseCache {
    pub fn signature(&self) -> impl Iterator<Item = u32> + '_ {
        let relu = self.activation == Activation::Relu;
        self.output.data().iter().map(move |&y| (relu && y > 0.0) as u32)
    }
}

/// `act(x·W + b)` for `x` of shape B×D (or a single D vector, treated as B = 1),
/// `W` of shape D×M.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, activation: Activation) -> Result<(Tensor, DenseCache)> {
    let (d, m) = (w.rows(), w.cols());
    let batch = if x.shape().len() == 1 { 1 } else { x.rows() };
    if x.len() != batch * d || b.len() != m || w.shape().len() != 2 {
        return Err(shape(format!("dense: x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape())));
    }
    let mut y = Tensor::zeros(&[batch, m]);
    for row in 0..batch {
        y.row_mut(row).copy_from_slice(b.data());
    }
    gemm(MatRef::new(x.data(), batch, d), MatRef::new(w.data(), d, m), y.data_mut(), m, 1.0);
    activation.apply(y.data_mut());
    if x.shape().len() == 1 {
        y = y.reshape(&[m])?;
    }
    let input = x.clone().reshape(&[batch, d])?;
    let cache = DenseCache {
        input,
        output: y.clone().reshape(&[batch, m])?,
        activation,
    };
    Ok((y, cache))
}

/// Accumulates into `dw`, `db`; returns dL/dx shaped B×D.
pub fn dense_backward(cache: &DenseCache, w: &Tensor, d_out: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Tensor {
    let (batch, d) = (cache.input.rows(), cache.input.cols());
    let m = w.cols();
    let mut d_pre = d_out.data().to_vec();
    cache.activation.backprop(cache.output.data(), &mut d_pre);
    for row in d_pre.chunks(m) {
        for (acc, g) in db.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    let dp = MatRef::new(&d_pre, batch, m);
    gemm(MatRef::new(cache.input.data(), batch, d).t(), dp, dw.data_mut(), m, 1.0);
    let mut d_input = Tensor::zeros(&[batch, d]);
    gemm(dp, MatRef::new(w.data(), d, m).t(), d_input.data_mut(), d, 0.0);
    d_input
}
