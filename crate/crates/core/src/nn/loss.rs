/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy.
pub fn bce_loss(p: &[f64], y: &[f64]) -> f64 {
    bce_loss_weighted(p, y, 1.0)
}

/// BCE with the positive-class term scaled by `pos_weight`.
pub fn bce_loss_weighted(p: &[f64], y: &[f64], pos_weight: f64) -> f64 {
    assert_eq!(p.len(), y.len(), "bce: length mismatch");
    if p.is_empty() {
        return 0.0;
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = clamp(p);
            -(pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / p.len() as f64
}

/// `dL/dp` of [`bce_loss_weighted`] (inside the clamp range).
pub fn bce_grad_probs(p: &[f64], y: &[f64], pos_weight: f64) -> Vec<f64> {
    let n = p.len() as f64;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = clamp(p);
            -(pos_weight * y / p - (1.0 - y) / (1.0 - p)) / n
        })
        .collect()
}

/// `dL/dz` where `p = σ(z)`; well defined even when `p` saturates.
pub fn bce_grad_logits(p: &[f64], y: &[f64], pos_weight: f64) -> Vec<f64> {
    let n = p.len() as f64;
    p.iter().zip(y).map(|(&p, &y)| (p * (pos_weight * y + 1.0 - y) - pos_weight * y) / n).collect()
}
