use crate::error::{Error, Result};
use crate::math::Tensor;

/// Source sample positions and weights along one axis, half-pixel centres.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f32)> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize of an `[H, W]` image to `[h_out, w_out]`.
pub fn resize_bilinear(image: &Tensor<f32>, w_out: usize, h_out: usize) -> Result<Tensor<f32>> {
    let (h, w) = image.dims2()?;
    if w_out == 0 || h_out == 0 {
        return Err(Error::dim(format!("resize target {w_out}×{h_out} has a zero extent")));
    }
    let xs = taps(w, w_out);
    let ys = taps(h, h_out);
    let src = image.data();
    let mut out = Vec::with_capacity(w_out * h_out);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
        }
    }
    Tensor::new(&[h_out, w_out], out)
}
