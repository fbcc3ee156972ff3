use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::tensor::Tensor;

/// Uniform on ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

/// rows × cols matrix whose columns (rows ≥ cols) or rows (rows < cols) are
/// orthonormal, from Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut out = Tensor::zeros(&[rows, cols]);
    for (k, q) in basis.iter().enumerate() {
        for (i, &val) in q.iter().enumerate() {
            let (r, c) = if rows >= cols { (i, k) } else { (k, i) };
            out.data_mut()[r * cols + c] = val;
        }
    }
    out
}
