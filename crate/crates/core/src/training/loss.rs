//! Slot-wise categorical cross-entropy, normalised by the class count.

use crate::error::{Error, Result};
use crate::math::{Real, Tensor};

/// Probabilities are clamped to this floor before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_labels<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let (m, n) = probs.dims2()?;
    if labels.len() != m {
        return Err(Error::dim(format!("{} labels for {m} slots", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::Index(format!("label {bad} outside {n} classes")));
    }
    Ok((m, n))
}

/// `(1/N) · Σ_m −ln max(p[m, y_m], 1e-12)`.
pub fn cce_loss<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (_, n) = check_labels(probs, labels)?;
    let floor = T::from_f64(PROB_FLOOR);
    let total = labels.iter().enumerate().fold(T::ZERO, |acc, (m, &y)| acc - probs.at2(m, y).max(floor).ln());
    Ok(total / T::from_f64(n as f64))
}

/// Gradient of [`cce_loss`] with respect to the pre-softmax logits:
/// `(p − onehot(y)) / N` per row. `n` is the class count as a scalar.
pub fn cce_logit_grad<T: Real>(probs: &Tensor<T>, labels: &[usize], n: T) -> Result<Tensor<T>> {
    let (_, cols) = check_labels(probs, labels)?;
    let mut g = probs.clone();
    for (m, &y) in labels.iter().enumerate() {
        g.data_mut()[m * cols + y] -= T::ONE;
    }
    g.scale(T::ONE / n);
    Ok(g)
}
