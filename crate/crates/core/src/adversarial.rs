//! Fast gradient sign attack and robustness sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::math::Tensor;
use crate::model::{GeoTrNet, GRAD_CHUNK};

/// `-1`, `0` or `1`.
fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `x + ε · sign(∇ₓ loss)`, before clamping.
fn step(image: &Tensor<f32>, grad: &Tensor<f32>, epsilon: f32) -> Tensor<f32> {
    let data = image.data().iter().zip(grad.data()).map(|(&x, &g)| x + epsilon * sign(g)).collect();
    Tensor::new(image.shape(), data).expect("same shape")
}

/// Untargeted attack against the true labels, result clamped to `[0, 1]`.
pub fn fgsm(model: &GeoTrNet<f32>, image: &Tensor<f32>, labels: &[usize], epsilon: f32) -> Result<Tensor<f32>> {
    fgsm_from_gradient(image, &model.input_gradient(image, labels)?, epsilon)
}

/// FGSM given a precomputed input gradient.
pub fn fgsm_from_gradient(image: &Tensor<f32>, grad: &Tensor<f32>, epsilon: f32) -> Result<Tensor<f32>> {
    if !(epsilon >= 0.0) {
        return Err(Error::Config(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if image.shape() != grad.shape() {
        return Err(Error::dim(format!("image {:?} vs gradient {:?}", image.shape(), grad.shape())));
    }
    Ok(step(image, grad, epsilon).map(|v| v.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    pub adversarial_accuracy: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub samples: usize,
    pub clean_accuracy: f64,
    pub per_epsilon: Vec<EpsilonResult>,
}

impl AttackReport {
    pub fn at(&self, epsilon: f64) -> Option<&EpsilonResult> {
        self.per_epsilon.iter().find(|r| (r.epsilon - epsilon).abs() < 1e-12)
    }

    /// True when accuracy never rises with ε (reported, not enforced).
    pub fn is_monotone(&self) -> bool {
        let mut sorted: Vec<_> = self.per_epsilon.iter().collect();
        sorted.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        sorted.windows(2).all(|w| w[1].adversarial_accuracy <= w[0].adversarial_accuracy)
    }
}

/// Clean exact-match accuracy and accuracy under FGSM at each ε.
pub fn attack_eval(model: &GeoTrNet<f32>, data: &Dataset, epsilons: &[f64]) -> Result<AttackReport> {
    if data.is_empty() || epsilons.is_empty() {
        return Err(Error::Config("attack needs samples and at least one epsilon".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    // per chunk: clean hit flags and adversarial hit flags per epsilon
    let parts = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| -> Result<(usize, Vec<usize>)> {
            let images: Vec<_> = chunk.iter().map(|&i| data.image(i)).collect();
            let refs: Vec<_> = images.iter().collect();
            let labels: Vec<&[usize]> = chunk.iter().map(|&i| data.labels(i)).collect();
            let hit = |probs: &[Tensor<f32>]| -> usize {
                probs.iter().zip(&labels).filter(|(p, y)| GeoTrNet::decide(p).labels == **y).count()
            };
            let clean = hit(&model.forward_batch(&refs)?);
            let grads = model.input_gradient_batch(&refs, &labels)?;
            let mut adv_hits = Vec::with_capacity(epsilons.len());
            for &eps in epsilons {
                let adv = images
                    .iter()
                    .zip(&grads)
                    .map(|(x, g)| fgsm_from_gradient(x, g, eps as f32))
                    .collect::<Result<Vec<_>>>()?;
                let adv_refs: Vec<_> = adv.iter().collect();
                adv_hits.push(hit(&model.forward_batch(&adv_refs)?));
            }
            Ok((clean, adv_hits))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = data.len() as f64;
    let clean = parts.iter().map(|p| p.0).sum::<usize>() as f64 / n;
    let per_epsilon = epsilons
        .iter()
        .enumerate()
        .map(|(k, &epsilon)| {
            let acc = parts.iter().map(|p| p.1[k]).sum::<usize>() as f64 / n;
            EpsilonResult { epsilon, adversarial_accuracy: acc, drop: clean - acc }
        })
        .collect();
    Ok(AttackReport { samples: data.len(), clean_accuracy: clean, per_epsilon })
}
