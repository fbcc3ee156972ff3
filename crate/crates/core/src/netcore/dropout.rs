use rand::Rng;

use super::tensor::Tensor;
use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct DropoutCache {
    /// 0 for dropped elements, 1/(1-rate) for survivors; empty when the
    /// forward pass was the identity.
    mask: Vec<f64>,
}

/// Inverted dropout. Inference mode (and rate 0) is the identity.
pub fn dropout_forward<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R, training: bool) -> Result<(Tensor, DropoutCache)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutCache { mask: Vec::new() }));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Ok((y, DropoutCache { mask }))
}

pub fn dropout_backward(cache: &DropoutCache, d_out: &Tensor) -> Tensor {
    let mut d = d_out.clone();
    if !cache.mask.is_empty() {
        d.data_mut().iter_mut().zip(&cache.mask).for_each(|(v, m)| *v *= m);
    }
    d
}
