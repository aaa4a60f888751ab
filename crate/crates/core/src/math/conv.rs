//! Same-length 1D convolution over `[channels × length]` tensors.
//!
//! Zero padding of `(k − 1)·dilation / 2` on both sides keeps the output length
//! equal to the input length. Kernels are odd-sized and stride is always 1.
//! The forward pass lowers the input to a `(C_in·k) × L` column matrix so that
//! both passes reduce to a single matrix product.

use super::tensor::{matmul_into, MatRef, Real, Tensor};
use crate::error::{Error, Result};

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct Conv1dCache<T: Real = f32> {
    cols: Vec<T>,
    weights: Tensor<T>,
    c_in: usize,
    len: usize,
    dilation: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads<T: Real = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_shapes<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    dilation: usize,
) -> Result<(usize, usize, usize, usize)> {
    let (c_in, len) = input.dims2()?;
    let (c_out, w_in, k) = weights.dims3()?;
    if w_in != c_in {
        return Err(Error::dim(format!("conv1d weights expect {w_in} input channels, input has {c_in}")));
    }
    if k % 2 == 0 {
        return Err(Error::dim(format!("conv1d kernel size must be odd, got {k}")));
    }
    if dilation == 0 {
        return Err(Error::dim("conv1d dilation must be positive"));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::dim(format!("conv1d bias shape {:?}, expected [{c_out}]", b.shape())));
        }
    }
    Ok((c_in, len, c_out, k))
}

fn im2col<T: Real>(x: &[T], c_in: usize, len: usize, k: usize, dilation: usize) -> Vec<T> {
    let pad = (k - 1) * dilation / 2;
    let mut cols = vec![T::ZERO; c_in * k * len];
    for i in 0..c_in {
        let src = &x[i * len..(i + 1) * len];
        for j in 0..k {
            let dst = &mut cols[(i * k + j) * len..(i * k + j + 1) * len];
            // out position t reads src[t + j·d − pad]
            let shift = (j * dilation) as isize - pad as isize;
            for (t, d) in dst.iter_mut().enumerate() {
                let s = t as isize + shift;
                if s >= 0 && (s as usize) < len {
                    *d = src[s as usize];
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], c_in: usize, len: usize, k: usize, dilation: usize) -> Vec<T> {
    let pad = (k - 1) * dilation / 2;
    let mut x = vec![T::ZERO; c_in * len];
    for i in 0..c_in {
        let dst = &mut x[i * len..(i + 1) * len];
        for j in 0..k {
            let src = &cols[(i * k + j) * len..(i * k + j + 1) * len];
            let shift = (j * dilation) as isize - pad as isize;
            for (t, &g) in src.iter().enumerate() {
                let s = t as isize + shift;
                if s >= 0 && (s as usize) < len {
                    dst[s as usize] += g;
                }
            }
        }
    }
    x
}

/// `out[c, t] = bias[c] + Σ_{i,j} w[c, i, j] · x_padded[i, t + j·d − pad]`.
///
/// A `None` bias is treated as zero.
pub fn conv1d_dilated<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    dilation: usize,
) -> Result<(Tensor<T>, Conv1dCache<T>)> {
    let (c_in, len, c_out, k) = check_shapes(input, weights, bias, dilation)?;
    input.ensure_finite("conv1d input")?;
    let cols = im2col(input.data(), c_in, len, k, dilation);
    let mut out = vec![T::ZERO; c_out * len];
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_exact_mut(len).zip(b.data()) {
            row.fill(bv);
        }
    }
    matmul_into(
        MatRef::new(weights.data(), c_out, c_in * k),
        MatRef::new(&cols, c_in * k, len),
        T::ONE,
        &mut out,
    );
    let out = Tensor::new(&[c_out, len], out)?;
    out.ensure_finite("conv1d output")?;
    Ok((out, Conv1dCache { cols, weights: weights.clone(), c_in, len, dilation }))
}

pub fn conv1d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Conv1dCache<T>)> {
    conv1d_dilated(input, weights, Some(bias), 1)
}

pub fn conv1d_backward<T: Real>(cache: &Conv1dCache<T>, grad_out: &Tensor<T>) -> Result<Conv1dGrads<T>> {
    let (c_out, c_in, k) = cache.weights.dims3()?;
    let len = cache.len;
    if grad_out.shape() != [c_out, len] {
        return Err(Error::dim(format!(
            "conv1d grad_out shape {:?}, expected [{c_out}, {len}]",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();

    let mut dw = vec![T::ZERO; c_out * c_in * k];
    matmul_into(
        MatRef::new(g, c_out, len),
        MatRef::new(&cache.cols, c_in * k, len).t(),
        T::ZERO,
        &mut dw,
    );
    let db: Vec<T> = g.chunks_exact(len).map(|row| row.iter().copied().sum()).collect();

    let mut dcols = vec![T::ZERO; c_in * k * len];
    matmul_into(
        MatRef::new(cache.weights.data(), c_out, c_in * k).t(),
        MatRef::new(g, c_out, len),
        T::ZERO,
        &mut dcols,
    );
    let dx = col2im(&dcols, cache.c_in, len, k, cache.dilation);

    let grads = Conv1dGrads {
        input: Tensor::new(&[c_in, len], dx)?,
        weights: Tensor::new(&[c_out, c_in, k], dw)?,
        bias: Tensor::new(&[c_out], db)?,
    };
    grads.input.ensure_finite("conv1d input gradient")?;
    grads.weights.ensure_finite("conv1d weight gradient")?;
    Ok(grads)
}
