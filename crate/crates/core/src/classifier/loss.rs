use crate::error::{Error, Result};

/// Predictions are clamped into `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

/// Mean binary cross entropy over the output labels, natural log.
pub fn bce_loss(predicted: &[f64], targets: &[f64]) -> Result<f64> {
    if predicted.len() != targets.len() {
        return Err(Error::validation(format!(
            "BCE length mismatch: {} predictions, {} targets",
            predicted.len(),
            targets.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::validation("BCE over zero labels"));
    }
    let sum: f64 = predicted
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / predicted.len() as f64)
}

/// Gradient of [`bce_loss`] with respect to the output logits, given sigmoid
/// outputs. Zero where the clamp is active.
pub(crate) fn bce_logit_grad(predicted: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = predicted.len() as f64;
    predicted
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            if (CLAMP..=1.0 - CLAMP).contains(&p) {
                (p - y) / n
            } else {
                0.0
            }
        })
        .collect()
}
