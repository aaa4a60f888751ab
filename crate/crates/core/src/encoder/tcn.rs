//! Acausal temporal convolution blocks: `y = relu(conv_d(x) + residual(x))`
//! with symmetric padding, so each output column sees both neighbours.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{conv1d_backward, conv1d_dilated, relu, relu_backward, Conv1dCache, Real, Tensor};

use super::uniform_init;

#[derive(Debug, Clone, PartialEq)]
pub struct TcnBlockParams<T: Real = f32> {
    /// `C_out × C_in × k`
    pub conv_w: Tensor<T>,
    pub conv_b: Tensor<T>,
    /// `C_out × C_in × 1`, present only when the channel count changes.
    pub res_w: Option<Tensor<T>>,
    pub dilation: usize,
}

impl<T: Real> TcnBlockParams<T> {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            conv_w: Tensor::zeros(&[c_out, c_in, kernel]),
            conv_b: Tensor::zeros(&[c_out]),
            res_w: (c_in != c_out).then(|| Tensor::zeros(&[c_out, c_in, 1])),
            dilation,
        }
    }

    pub fn init(c_in: usize, c_out: usize, kernel: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(c_in, c_out, kernel, dilation);
        uniform_init(&mut p.conv_w, c_in * kernel, c_out * kernel, rng);
        if let Some(r) = p.res_w.as_mut() {
            uniform_init(r, c_in, c_out, rng);
        }
        p
    }

    pub fn cast<U: Real>(&self) -> TcnBlockParams<U> {
        TcnBlockParams {
            conv_w: self.conv_w.cast(),
            conv_b: self.conv_b.cast(),
            res_w: self.res_w.as_ref().map(Tensor::cast),
            dilation: self.dilation,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv_w.shape()[0]
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.conv_w, &self.conv_b];
        v.extend(self.res_w.as_ref());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.conv_w, &mut self.conv_b];
        v.extend(self.res_w.as_mut());
        v
    }
}

#[derive(Debug, Clone)]
pub struct TcnBlockCache<T: Real = f32> {
    conv: Conv1dCache<T>,
    res: Option<Conv1dCache<T>>,
    output: Tensor<T>,
}

pub fn tcn_block_forward<T: Real>(x: &Tensor<T>, p: &TcnBlockParams<T>) -> Result<(Tensor<T>, TcnBlockCache<T>)> {
    let k = p.conv_w.shape()[2];
    if ((k - 1) * p.dilation) % 2 != 0 {
        return Err(Error::dim(format!("TCN kernel {k} with dilation {} cannot pad symmetrically", p.dilation)));
    }
    let (mut z, conv) = conv1d_dilated(x, &p.conv_w, Some(&p.conv_b), p.dilation)?;
    let res = match &p.res_w {
        Some(w) => {
            let (r, cache) = conv1d_dilated(x, w, None, 1)?;
            z.add_scaled(&r, T::ONE);
            Some(cache)
        }
        None => {
            if x.shape() != z.shape() {
                return Err(Error::dim(format!(
                    "identity residual needs matching channels: {:?} vs {:?}",
                    x.shape(),
                    z.shape()
                )));
            }
            z.add_scaled(x, T::ONE);
            None
        }
    };
    let y = relu(&z);
    Ok((y.clone(), TcnBlockCache { conv, res, output: y }))
}

/// Returns `(d_input, d_params)`.
pub fn tcn_block_backward<T: Real>(
    cache: &TcnBlockCache<T>,
    p: &TcnBlockParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, TcnBlockParams<T>)> {
    if grad_out.shape() != cache.output.shape() {
        return Err(Error::dim("TCN grad_out shape mismatch"));
    }
    let dz = relu_backward(&cache.output, grad_out);
    let g = conv1d_backward(&cache.conv, &dz)?;
    let mut dx = g.input;
    let res_w = match &cache.res {
        Some(rc) => {
            let rg = conv1d_backward(rc, &dz)?;
            dx.add_scaled(&rg.input, T::ONE);
            Some(rg.weights)
        }
        None => {
            dx.add_scaled(&dz, T::ONE);
            None
        }
    };
    Ok((dx, TcnBlockParams { conv_w: g.weights, conv_b: g.bias, res_w, dilation: p.dilation }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gradcheck::{grad_check, DEFAULT_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn output_length_equals_input_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 2, 4] {
            let p = TcnBlockParams::<f32>::init(3, 5, 3, d, &mut rng);
            let x = Tensor::full(&[3, 11], 0.5);
            let (y, _) = tcn_block_forward(&x, &p).unwrap();
            assert_eq!(y.shape(), &[5, 11]);
        }
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        for (c_in, c_out, d, seed) in [(2, 3, 1, 5u64), (3, 3, 2, 6)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p0 = TcnBlockParams::<f64>::init(c_in, c_out, 3, d, &mut rng);
            let x = rand_t(&mut rng, &[c_in, 7]);
            let mut conv_b = rand_t(&mut rng, &[c_out]);
            conv_b.scale(0.3);
            let p = TcnBlockParams { conv_b, ..p0 };
            let r = rand_t(&mut rng, &[c_out, 7]);
            let has_res = p.res_w.is_some();
            let loss = |ts: &[Tensor<f64>]| -> f64 {
                let q = TcnBlockParams {
                    conv_w: ts[1].clone(),
                    conv_b: ts[2].clone(),
                    res_w: has_res.then(|| ts[3].clone()),
                    dilation: d,
                };
                let (y, _) = tcn_block_forward(&ts[0], &q).unwrap();
                y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = tcn_block_forward(&x, &p).unwrap();
            let (dx, g) = tcn_block_backward(&cache, &p, &r).unwrap();
            let mut params = vec![x, p.conv_w.clone(), p.conv_b.clone()];
            let mut grads = vec![dx, g.conv_w, g.conv_b];
            if let (Some(w), Some(gw)) = (p.res_w.clone(), g.res_w) {
                params.push(w);
                grads.push(gw);
            }
            let err = grad_check(loss, &params, &grads, DEFAULT_STEP).unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }
}
