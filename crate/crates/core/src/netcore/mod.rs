//! Numerical kernels: a dense tensor type, forward and backward passes for
//! every layer of the classifier, the loss, and a finite-difference checker.
//!
//! Backward functions accumulate parameter gradients into caller-provided
//! buffers and return the gradient with respect to their input.

mod attention;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod gradcheck;
pub mod init;
mod loss;
mod lstm;
mod pool;
mod tensor;

pub use attention::{attention_backward, attention_forward, softmax, AttentionCache, AttentionParams};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormState, BatchStats, BnMode, BN_EPSILON,
    BN_MOMENTUM,
};
pub use conv::{conv1d_backward, conv1d_forward, Conv1dCache};
pub use dense::{dense_backward, dense_forward, DenseCache};
pub use dropout::{dropout_backward, dropout_forward, DropoutCache};
pub use gradcheck::{grad_check, relative_error, Coordinate, GradCheckReport, Probe};
pub use loss::{bce_from_logits, bce_grad_logits, bce_loss, BCE_CLIP};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_cell, lstm_cell_backward, lstm_sequence, lstm_sequence_backward, BiLstmCache,
    LstmCellCache, LstmCellGrads, LstmParams, LstmSeqCache,
};
pub use pool::{maxpool1d, maxpool1d_backward, MaxPoolCache};
pub use tensor::{gemm, MatRef, Tensor};

use crate::error::{shape, Result};

pub(crate) const LSTM_GATES: usize = 4;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, xs: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => xs.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Sigmoid => xs.iter_mut().for_each(|x| *x = sigmoid(*x)),
        }
    }

    /// Multiply `grad` in place by the activation derivative, expressed
    /// through the activation's output `y`.
    pub fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, &y)| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Sigmoid => grad.iter_mut().zip(y).for_each(|(g, &y)| *g *= y * (1.0 - y)),
        }
    }
}

/// Row-major flattening of a T×F tensor.
pub fn flatten(x: &Tensor) -> Tensor {
    Tensor::vector(x.data().to_vec())
}

/// Inverse of [`flatten`].
pub fn unflatten(x: &Tensor, rows: usize, cols: usize) -> Result<Tensor> {
    if x.len() != rows * cols {
        return Err(shape(format!("cannot unflatten {} into {rows}×{cols}", x.len())));
    }
    Tensor::from_vec(&[rows, cols], x.data().to_vec())
}
