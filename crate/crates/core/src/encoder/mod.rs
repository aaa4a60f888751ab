//! Column-wise image encoder.
//!
//! The image is consumed one pixel column at a time, each column read bottom
//! to top as an `H_img`-dimensional vector, and mapped to a latent matrix with
//! one feature column per pixel column. Two stacks are available: a
//! bidirectional LSTM followed by a unidirectional LSTM, or a stack of
//! acausal TCN blocks.

pub mod lstm;
pub mod tcn;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Real, Tensor};

pub use lstm::{lstm_sequence_backward, lstm_sequence_forward, lstm_step, LstmCache, LstmParams};
pub use tcn::{tcn_block_backward, tcn_block_forward, TcnBlockCache, TcnBlockParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Bilstm,
    Tcn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// LSTM cells per direction in the bidirectional layer.
    pub hidden_per_direction: usize,
    /// Width of the second (unidirectional) LSTM, which is also the latent size.
    pub second_hidden: usize,
    pub tcn_channels: Vec<usize>,
    pub tcn_dilations: Vec<usize>,
    pub tcn_kernel: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Bilstm,
            hidden_per_direction: 24,
            second_hidden: 48,
            tcn_channels: vec![32, 48, 48],
            tcn_dilations: vec![1, 2, 4],
            tcn_kernel: 3,
        }
    }
}

impl EncoderConfig {
    pub fn tcn() -> Self {
        Self { kind: EncoderKind::Tcn, ..Self::default() }
    }

    /// Number of latent features per column.
    pub fn feature_size(&self) -> usize {
        match self.kind {
            EncoderKind::Bilstm => self.second_hidden,
            EncoderKind::Tcn => self.tcn_channels.last().copied().unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EncoderKind::Bilstm => {
                if self.hidden_per_direction == 0 || self.second_hidden == 0 {
                    return Err(Error::Config("LSTM widths must be positive".into()));
                }
            }
            EncoderKind::Tcn => {
                if self.tcn_channels.is_empty() || self.tcn_channels.len() != self.tcn_dilations.len() {
                    return Err(Error::Config("TCN channel and dilation schedules must be non-empty and equal length".into()));
                }
                if self.tcn_channels.contains(&0) || self.tcn_dilations.contains(&0) {
                    return Err(Error::Config("TCN channels and dilations must be positive".into()));
                }
                if self.tcn_kernel % 2 == 0 {
                    return Err(Error::Config("TCN kernel must be odd".into()));
                }
            }
        }
        Ok(())
    }
}

/// Fills `t` with `U(−s, s)`, `s = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn uniform_init<T: Real>(t: &mut Tensor<T>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = T::from_f64(rng.gen_range(-s..=s));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams<T: Real = f32> {
    Bilstm { forward: LstmParams<T>, backward: LstmParams<T>, second: LstmParams<T> },
    Tcn { blocks: Vec<TcnBlockParams<T>> },
}

impl<T: Real> EncoderParams<T> {
    pub fn init(cfg: &EncoderConfig, height: usize, rng: &mut impl Rng) -> Self {
        match cfg.kind {
            EncoderKind::Bilstm => {
                let hd = cfg.hidden_per_direction;
                let forward = LstmParams::init(height, hd, rng);
                let backward = LstmParams::init(height, hd, rng);
                let second = LstmParams::init(2 * hd, cfg.second_hidden, rng);
                EncoderParams::Bilstm { forward, backward, second }
            }
            EncoderKind::Tcn => {
                let mut c_in = height;
                let blocks = cfg
                    .tcn_channels
                    .iter()
                    .zip(&cfg.tcn_dilations)
                    .map(|(&c_out, &d)| {
                        let b = TcnBlockParams::init(c_in, c_out, cfg.tcn_kernel, d, rng);
                        c_in = c_out;
                        b
                    })
                    .collect();
                EncoderParams::Tcn { blocks }
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            EncoderParams::Bilstm { forward, backward, second } => EncoderParams::Bilstm {
                forward: LstmParams::zeros(forward.input(), forward.hidden()),
                backward: LstmParams::zeros(backward.input(), backward.hidden()),
                second: LstmParams::zeros(second.input(), second.hidden()),
            },
            EncoderParams::Tcn { blocks } => EncoderParams::Tcn {
                blocks: blocks
                    .iter()
                    .map(|b| {
                        let (c_out, c_in, k) = b.conv_w.dims3().expect("rank-3 conv weights");
                        TcnBlockParams::zeros(c_in, c_out, k, b.dilation)
                    })
                    .collect(),
            },
        }
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        match self {
            EncoderParams::Bilstm { forward, backward, second } => {
                EncoderParams::Bilstm { forward: forward.cast(), backward: backward.cast(), second: second.cast() }
            }
            EncoderParams::Tcn { blocks } => EncoderParams::Tcn { blocks: blocks.iter().map(TcnBlockParams::cast).collect() },
        }
    }

    /// Tensors in architecture order with their stable names.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        match self {
            EncoderParams::Bilstm { forward, backward, second } => {
                for (prefix, p) in [("encoder.bilstm.fwd", forward), ("encoder.bilstm.bwd", backward), ("encoder.lstm", second)] {
                    for (suffix, t) in ["wx", "wh", "b"].iter().zip(p.tensors()) {
                        out.push((format!("{prefix}.{suffix}"), t));
                    }
                }
            }
            EncoderParams::Tcn { blocks } => {
                for (i, b) in blocks.iter().enumerate() {
                    out.push((format!("encoder.tcn.{i}.conv.w"), &b.conv_w));
                    out.push((format!("encoder.tcn.{i}.conv.b"), &b.conv_b));
                    if let Some(r) = &b.res_w {
                        out.push((format!("encoder.tcn.{i}.res.w"), r));
                    }
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            EncoderParams::Bilstm { forward, backward, second } => {
                let mut v: Vec<&mut Tensor<T>> = Vec::with_capacity(9);
                v.extend(forward.tensors_mut());
                v.extend(backward.tensors_mut());
                v.extend(second.tensors_mut());
                v
            }
            EncoderParams::Tcn { blocks } => blocks.iter_mut().flat_map(|b| b.tensors_mut()).collect(),
        }
    }

    /// Image height (column vector length) these parameters accept.
    pub fn input_size(&self) -> usize {
        match self {
            EncoderParams::Bilstm { forward, .. } => forward.input(),
            EncoderParams::Tcn { blocks } => blocks[0].conv_w.shape()[1],
        }
    }

    pub fn feature_size(&self) -> usize {
        match self {
            EncoderParams::Bilstm { second, .. } => second.hidden(),
            EncoderParams::Tcn { blocks } => blocks.last().map_or(0, |b| b.out_channels()),
        }
    }
}

/// Pixel columns of an `H × W` image as an `H × W` matrix whose row `i`
/// is image row `H − 1 − i` (bottom-to-top feature order).
pub fn image_columns<T: Real>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = image.dims2()?;
    let src = image.data();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        out.extend_from_slice(&src[(h - 1 - i) * w..(h - i) * w]);
    }
    Tensor::new(&[h, w], out)
}

/// Bidirectional LSTM over a single `I × T` column sequence. Output column
/// `t` stacks the forward and backward hidden states at `t`.
pub fn bilstm_forward<T: Real>(columns: &Tensor<T>, fwd: &LstmParams<T>, bwd: &LstmParams<T>) -> Result<Tensor<T>> {
    let (inp, steps) = columns.dims2()?;
    if fwd.input() != inp || bwd.input() != inp {
        return Err(Error::dim(format!("bilstm expects {} inputs per column, got {inp}", fwd.input())));
    }
    let mut x = vec![T::ZERO; steps * inp];
    for i in 0..inp {
        for t in 0..steps {
            x[t * inp + i] = columns.data()[i * steps + t];
        }
    }
    let (hf, _) = lstm_sequence_forward(&x, steps, 1, fwd, false)?;
    let (hb, _) = lstm_sequence_forward(&x, steps, 1, bwd, true)?;
    let (h1, h2) = (fwd.hidden(), bwd.hidden());
    let mut out = vec![T::ZERO; (h1 + h2) * steps];
    for t in 0..steps {
        for j in 0..h1 {
            out[j * steps + t] = hf[t * h1 + j];
        }
        for j in 0..h2 {
            out[(h1 + j) * steps + t] = hb[t * h2 + j];
        }
    }
    Tensor::new(&[h1 + h2, steps], out)
}

#[derive(Debug, Clone)]
pub enum EncoderCache<T: Real = f32> {
    Bilstm { fwd: LstmCache<T>, bwd: LstmCache<T>, second: LstmCache<T>, height: usize, width: usize, batch: usize },
    Tcn { blocks: Vec<Vec<TcnBlockCache<T>>>, height: usize, width: usize },
}

fn check_batch<T: Real>(images: &[&Tensor<T>], height: usize) -> Result<usize> {
    let first = images.first().ok_or_else(|| Error::dim("empty image batch"))?;
    let (h, w) = first.dims2()?;
    if h != height {
        return Err(Error::dim(format!("encoder expects image height {height}, got {h}")));
    }
    for img in images {
        if img.shape() != [h, w] {
            return Err(Error::dim(format!("mixed image shapes in batch: {:?} vs [{h}, {w}]", img.shape())));
        }
    }
    Ok(w)
}

/// Encodes a batch of equally sized images into per-image `F × T` latents.
pub fn encode_batch<T: Real>(images: &[&Tensor<T>], params: &EncoderParams<T>) -> Result<(Vec<Tensor<T>>, EncoderCache<T>)> {
    let height = params.input_size();
    let width = check_batch(images, height)?;
    let batch = images.len();
    match params {
        EncoderParams::Bilstm { forward, backward, second } => {
            let mut x = vec![T::ZERO; width * batch * height];
            for (b, img) in images.iter().enumerate() {
                let src = img.data();
                for t in 0..width {
                    let row = &mut x[(t * batch + b) * height..(t * batch + b + 1) * height];
                    for (i, v) in row.iter_mut().enumerate() {
                        *v = src[(height - 1 - i) * width + t];
                    }
                }
            }
            let (hf, fwd) = lstm_sequence_forward(&x, width, batch, forward, false)?;
            let (hb, bwd) = lstm_sequence_forward(&x, width, batch, backward, true)?;
            let (h1, h2) = (forward.hidden(), backward.hidden());
            let hcat = h1 + h2;
            let mut mid = vec![T::ZERO; width * batch * hcat];
            for r in 0..width * batch {
                mid[r * hcat..r * hcat + h1].copy_from_slice(&hf[r * h1..(r + 1) * h1]);
                mid[r * hcat + h1..(r + 1) * hcat].copy_from_slice(&hb[r * h2..(r + 1) * h2]);
            }
            let (hs, second_cache) = lstm_sequence_forward(&mid, width, batch, second, false)?;
            let f = second.hidden();
            let latents = (0..batch)
                .map(|b| {
                    let mut data = vec![T::ZERO; f * width];
                    for t in 0..width {
                        let src = &hs[(t * batch + b) * f..(t * batch + b + 1) * f];
                        for (j, &v) in src.iter().enumerate() {
                            data[j * width + t] = v;
                        }
                    }
                    Tensor::new(&[f, width], data)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((latents, EncoderCache::Bilstm { fwd, bwd, second: second_cache, height, width, batch }))
        }
        EncoderParams::Tcn { blocks } => {
            let mut latents = Vec::with_capacity(batch);
            let mut caches = Vec::with_capacity(batch);
            for img in images {
                let mut x = image_columns(img)?;
                let mut per = Vec::with_capacity(blocks.len());
                for block in blocks {
                    let (y, c) = tcn_block_forward(&x, block)?;
                    per.push(c);
                    x = y;
                }
                latents.push(x);
                caches.push(per);
            }
            Ok((latents, EncoderCache::Tcn { blocks: caches, height, width }))
        }
    }
}

/// Gradients of the encoder given `d_latents` (one `F × T` tensor per image).
/// When `want_input` is set, also returns per-image `H × W` pixel gradients.
pub fn encode_batch_backward<T: Real>(
    cache: &EncoderCache<T>,
    params: &EncoderParams<T>,
    d_latents: &[Tensor<T>],
    want_input: bool,
) -> Result<(EncoderParams<T>, Option<Vec<Tensor<T>>>)> {
    match (cache, params) {
        (
            EncoderCache::Bilstm { fwd, bwd, second: second_cache, height, width, batch },
            EncoderParams::Bilstm { forward, backward, second },
        ) => {
            let (height, width, batch) = (*height, *width, *batch);
            if d_latents.len() != batch {
                return Err(Error::dim(format!("{} latent gradients for batch of {batch}", d_latents.len())));
            }
            let f = second.hidden();
            let mut dh = vec![T::ZERO; width * batch * f];
            for (b, dl) in d_latents.iter().enumerate() {
                if dl.shape() != [f, width] {
                    return Err(Error::dim(format!("latent gradient shape {:?}, expected [{f}, {width}]", dl.shape())));
                }
                for j in 0..f {
                    let src = dl.row(j);
                    for (t, &v) in src.iter().enumerate() {
                        dh[(t * batch + b) * f + j] = v;
                    }
                }
            }
            let (dmid, g_second) = lstm_sequence_backward(second_cache, second, &dh)?;
            let (h1, h2) = (forward.hidden(), backward.hidden());
            let hcat = h1 + h2;
            let rows = width * batch;
            let mut dhf = vec![T::ZERO; rows * h1];
            let mut dhb = vec![T::ZERO; rows * h2];
            for r in 0..rows {
                dhf[r * h1..(r + 1) * h1].copy_from_slice(&dmid[r * hcat..r * hcat + h1]);
                dhb[r * h2..(r + 1) * h2].copy_from_slice(&dmid[r * hcat + h1..(r + 1) * hcat]);
            }
            let (dxf, g_fwd) = lstm_sequence_backward(fwd, forward, &dhf)?;
            let (dxb, g_bwd) = lstm_sequence_backward(bwd, backward, &dhb)?;
            let grads = EncoderParams::Bilstm { forward: g_fwd, backward: g_bwd, second: g_second };
            let inputs = want_input.then(|| {
                (0..batch)
                    .map(|b| {
                        let mut img = vec![T::ZERO; height * width];
                        for t in 0..width {
                            let r = (t * batch + b) * height;
                            for i in 0..height {
                                img[(height - 1 - i) * width + t] = dxf[r + i] + dxb[r + i];
                            }
                        }
                        Tensor::new(&[height, width], img)
                    })
                    .collect::<Result<Vec<_>>>()
            });
            Ok((grads, inputs.transpose()?))
        }
        (EncoderCache::Tcn { blocks: caches, height, width }, EncoderParams::Tcn { blocks }) => {
            if d_latents.len() != caches.len() {
                return Err(Error::dim(format!("{} latent gradients for batch of {}", d_latents.len(), caches.len())));
            }
            let mut grads = params.zeros_like();
            let mut inputs = Vec::new();
            for (per, dl) in caches.iter().zip(d_latents) {
                let mut g = dl.clone();
                let mut block_grads = Vec::with_capacity(blocks.len());
                for (block, c) in blocks.iter().zip(per).rev() {
                    let (dx, bg) = tcn_block_backward(c, block, &g)?;
                    block_grads.push(bg);
                    g = dx;
                }
                block_grads.reverse();
                if let EncoderParams::Tcn { blocks: acc } = &mut grads {
                    for (a, bg) in acc.iter_mut().zip(&block_grads) {
                        for (at, bt) in a.tensors_mut().into_iter().zip(bg.tensors()) {
                            at.add_scaled(bt, T::ONE);
                        }
                    }
                }
                if want_input {
                    // undo the bottom-to-top row order
                    let (h, w) = (*height, *width);
                    let mut img = vec![T::ZERO; h * w];
                    for i in 0..h {
                        img[(h - 1 - i) * w..(h - i) * w].copy_from_slice(g.row(i));
                    }
                    inputs.push(Tensor::new(&[h, w], img)?);
                }
            }
            Ok((grads, want_input.then_some(inputs)))
        }
        _ => Err(Error::dim("encoder cache does not match parameter kind")),
    }
}

/// Latent matrix (`F × W`) for a single `H × W` image.
pub fn encode_image<T: Real>(image: &Tensor<T>, params: &EncoderParams<T>) -> Result<Tensor<T>> {
    let (mut latents, _) = encode_batch(&[image], params)?;
    Ok(latents.remove(0))
}
