//! Central-difference gradient checking in double precision.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of the scalar function
/// `f` around `params`, returning the largest relative error over all
/// elements.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], analytic: &[Tensor<f64>], step: f64) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::dim(format!("{} parameters but {} gradients", params.len(), analytic.len())));
    }
    for (p, g) in params.iter().zip(analytic) {
        if p.shape() != g.shape() {
            return Err(Error::dim(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
        g.ensure_finite("analytic gradient")?;
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for (e, &a) in grad.data().iter().enumerate() {
            let orig = probe[pi].data()[e];
            probe[pi].data_mut()[e] = orig + step;
            let up = f(&probe);
            probe[pi].data_mut()[e] = orig - step;
            let down = f(&probe);
            probe[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}
