//! Object projection unit.
//!
//! The latent matrix `[F × T]` goes through a class convolution (one output
//! channel per class, sliding along the column axis) giving `[N × T]`, is
//! transposed to `[T × N]` so that every latent column becomes an input
//! channel, and is then reduced by a slot convolution (one output channel per
//! character slot) to `[M × N]`. A softmax over each row yields one class
//! distribution per slot, left to right.

use rand::Rng;

use crate::encoder::uniform_init;
use crate::error::{Error, Result};
use crate::math::{
    conv1d_backward, conv1d_forward, softmax_rows, softmax_rows_backward, transpose, Conv1dCache, Real, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams<T: Real = f32> {
    /// `N × F × k₁`
    pub class_w: Tensor<T>,
    pub class_b: Tensor<T>,
    /// `M × T × k₂`
    pub slot_w: Tensor<T>,
    pub slot_b: Tensor<T>,
}

impl<T: Real> ProjectionParams<T> {
    pub fn zeros(features: usize, width: usize, classes: usize, slots: usize, k_class: usize, k_slot: usize) -> Self {
        Self {
            class_w: Tensor::zeros(&[classes, features, k_class]),
            class_b: Tensor::zeros(&[classes]),
            slot_w: Tensor::zeros(&[slots, width, k_slot]),
            slot_b: Tensor::zeros(&[slots]),
        }
    }

    pub fn init(
        features: usize,
        width: usize,
        classes: usize,
        slots: usize,
        k_class: usize,
        k_slot: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(features, width, classes, slots, k_class, k_slot);
        uniform_init(&mut p.class_w, features * k_class, classes * k_class, rng);
        uniform_init(&mut p.slot_w, width * k_slot, slots * k_slot, rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            class_w: Tensor::zeros(self.class_w.shape()),
            class_b: Tensor::zeros(self.class_b.shape()),
            slot_w: Tensor::zeros(self.slot_w.shape()),
            slot_b: Tensor::zeros(self.slot_b.shape()),
        }
    }

    pub fn cast<U: Real>(&self) -> ProjectionParams<U> {
        ProjectionParams {
            class_w: self.class_w.cast(),
            class_b: self.class_b.cast(),
            slot_w: self.slot_w.cast(),
            slot_b: self.slot_b.cast(),
        }
    }

    pub fn classes(&self) -> usize {
        self.class_w.shape()[0]
    }

    pub fn slots(&self) -> usize {
        self.slot_w.shape()[0]
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("projection.class.w".into(), &self.class_w),
            ("projection.class.b".into(), &self.class_b),
            ("projection.slot.w".into(), &self.slot_w),
            ("projection.slot.b".into(), &self.slot_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.class_w, &mut self.class_b, &mut self.slot_w, &mut self.slot_b]
    }
}

/// Intermediate values of one projection pass.
#[derive(Debug, Clone)]
pub struct ProjectionCache<T: Real = f32> {
    class_cache: Conv1dCache<T>,
    slot_cache: Conv1dCache<T>,
    /// class convolution output, `N × T`
    pub class_map: Tensor<T>,
    /// pre-softmax slot scores, `M × N`
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ProjectionGrads<T: Real = f32> {
    pub latent: Tensor<T>,
    pub params: ProjectionParams<T>,
}

pub fn project_with_cache<T: Real>(latent: &Tensor<T>, p: &ProjectionParams<T>) -> Result<ProjectionCache<T>> {
    let (f, t) = latent.dims2()?;
    let (_, f_expect, _) = p.class_w.dims3()?;
    let (_, t_expect, _) = p.slot_w.dims3()?;
    if f != f_expect || t != t_expect {
        return Err(Error::dim(format!(
            "projection configured for latent [{f_expect}, {t_expect}], got [{f}, {t}]"
        )));
    }
    latent.ensure_finite("latent")?;
    let (class_map, class_cache) = conv1d_forward(latent, &p.class_w, &p.class_b)?;
    let by_column = transpose(&class_map)?;
    let (logits, slot_cache) = conv1d_forward(&by_column, &p.slot_w, &p.slot_b)?;
    let probs = softmax_rows(&logits)?;
    Ok(ProjectionCache { class_cache, slot_cache, class_map, logits, probs })
}

/// Row-stochastic `M × N` slot/class matrix for an `F × T` latent.
pub fn project<T: Real>(latent: &Tensor<T>, p: &ProjectionParams<T>) -> Result<Tensor<T>> {
    Ok(project_with_cache(latent, p)?.probs)
}

/// Backward pass starting from the gradient with respect to the pre-softmax logits.
pub fn project_backward_logits<T: Real>(cache: &ProjectionCache<T>, grad_logits: &Tensor<T>) -> Result<ProjectionGrads<T>> {
    if grad_logits.shape() != cache.logits.shape() {
        return Err(Error::dim(format!(
            "projection grad shape {:?}, expected {:?}",
            grad_logits.shape(),
            cache.logits.shape()
        )));
    }
    let slot = conv1d_backward(&cache.slot_cache, grad_logits)?;
    let d_class_map = transpose(&slot.input)?;
    let class = conv1d_backward(&cache.class_cache, &d_class_map)?;
    Ok(ProjectionGrads {
        latent: class.input,
        params: ProjectionParams { class_w: class.weights, class_b: class.bias, slot_w: slot.weights, slot_b: slot.bias },
    })
}

/// Backward pass starting from the gradient with respect to the output probabilities.
pub fn project_backward<T: Real>(cache: &ProjectionCache<T>, grad_probs: &Tensor<T>) -> Result<ProjectionGrads<T>> {
    let grad_logits = softmax_rows_backward(&cache.probs, grad_probs)?;
    project_backward_logits(cache, &grad_logits)
}
