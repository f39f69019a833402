use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-10;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy over the batch, plus its gradient with respect
/// to the pre-sigmoid logits, `(ŷ - y) / n`.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let n = predictions.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = clamp_prob(p);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((p - y) / n);
    }
    Ok((loss / n, grad))
}
