use super::sigmoid;

/// Probabilities are clipped into [BCE_CLIP, 1 - BCE_CLIP] before the log.
pub const BCE_CLIP: f64 = 1e-12;

fn clip(p: f64) -> f64 {
    p.clamp(BCE_CLIP, 1.0 - BCE_CLIP)
}

/// Mean binary cross-entropy.
pub fn bce_loss(p: &[f64], y: &[f64]) -> f64 {
    assert_eq!(p.len(), y.len());
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = clip(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / p.len() as f64
}

/// Gradient of [`bce_loss`] with respect to the logits that produced `p`
/// through a sigmoid. Zero wherever the clip is active.
pub fn bce_grad_logits(p: &[f64], y: &[f64]) -> Vec<f64> {
    let n = p.len() as f64;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| if clip(p) != p { 0.0 } else { (p - y) / n })
        .collect()
}

/// BCE evaluated from logits, for callers that hold them.
pub fn bce_from_logits(z: &[f64], y: &[f64]) -> f64 {
    let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
    bce_loss(&p, y)
}
