//! Adam and its sharpness-aware wrapper.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Real, Tensor};
use crate::model::ParamVec;

/// Added to the global gradient norm before normalising the SAM perturbation.
pub const SAM_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-7 }
    }
}

/// Adam moments for a fixed parameter layout.
#[derive(Debug, Clone)]
pub struct Adam<T: Real = f32> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new<P: ParamVec<T>>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    /// One bias-corrected update of `params` with `grads`.
    pub fn step<P: ParamVec<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        let params = params.tensors_mut();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim(format!(
                "optimizer holds {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::dim(format!("param {:?} / grad {:?} vs state {:?}", p.shape(), g.shape(), m.shape())));
            }
        }
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let corr1 = T::from_f64(1.0 - c.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(self.t as i32));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &gi), mi), vi) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm over all tensors.
pub fn global_norm<T: Real, P: ParamVec<T>>(p: &P) -> f64 {
    p.tensors().iter().map(|t| t.sum_squares().to_f64()).sum::<f64>().sqrt()
}

/// One SAM update. `grad` is the gradient at `params`; `grad_at` evaluates
/// the gradient at an arbitrary point. The perturbation is applied to a copy,
/// so `params` only ever receives the Adam update.
pub fn sam_step<T: Real, P: ParamVec<T>>(
    params: &mut P,
    grad: &P,
    adam: &mut Adam<T>,
    rho: f64,
    grad_at: impl FnOnce(&P) -> Result<P>,
) -> Result<()> {
    let norm = global_norm(grad);
    if rho == 0.0 || norm == 0.0 {
        return adam.step(params, grad);
    }
    let scale = T::from_f64(rho / (norm + SAM_NORM_EPS));
    let mut perturbed = params.clone();
    for (w, g) in perturbed.tensors_mut().into_iter().zip(grad.tensors()) {
        w.add_scaled(g, scale);
    }
    let sharp = grad_at(&perturbed)?;
    adam.step(params, &sharp)
}
