//! The assembled recognizer: encoder followed by projection unit.

mod weights;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_batch, encode_batch_backward, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::math::{Real, Tensor};
use crate::projection::{project_backward_logits, project_with_cache, ProjectionParams};
use crate::training::loss::{cce_logit_grad, cce_loss};

pub use weights::{load, read_weights, save, write_weights, WEIGHT_FORMAT_VERSION, WEIGHT_MAGIC};

/// Samples per work item when a batch is split across threads. Fixed so the
/// reduction order, and therefore the result, does not depend on thread count.
pub const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width: usize,
    pub height: usize,
    pub slots: usize,
    pub classes: usize,
    pub encoder: EncoderConfig,
    pub class_kernel: usize,
    pub slot_kernel: usize,
    /// Display character for each class index.
    pub labels: Vec<char>,
}

pub const SPACE_LABEL: char = ' ';

impl ModelConfig {
    /// Digit recognizer with `slots` character positions on `width × height` input.
    pub fn digits(width: usize, height: usize, slots: usize) -> Self {
        Self {
            width,
            height,
            slots,
            classes: 10,
            encoder: EncoderConfig::default(),
            class_kernel: 3,
            slot_kernel: 1,
            labels: ('0'..='9').collect(),
        }
    }

    /// 224×28 input, 8 digit slots, Bi-LSTM(24+24) → LSTM(48).
    pub fn base() -> Self {
        Self::digits(224, 28, 8)
    }

    /// Adds a trailing space class.
    pub fn with_space_class(mut self) -> Self {
        if !self.labels.contains(&SPACE_LABEL) {
            self.labels.push(SPACE_LABEL);
            self.classes = self.labels.len();
        }
        self
    }

    pub fn with_encoder(mut self, encoder: EncoderConfig) -> Self {
        self.encoder = encoder;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.slots == 0 || self.classes == 0 {
            return Err(Error::Config("width, height, slots and classes must be positive".into()));
        }
        if self.labels.len() != self.classes {
            return Err(Error::Config(format!("{} labels for {} classes", self.labels.len(), self.classes)));
        }
        let mut seen = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.labels.len() {
            return Err(Error::Config("class labels must be unique".into()));
        }
        if self.class_kernel % 2 == 0 || self.slot_kernel % 2 == 0 {
            return Err(Error::Config("projection kernels must be odd".into()));
        }
        self.encoder.validate()
    }

    /// Canonical JSON text with sorted keys.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub encoder: EncoderParams<T>,
    pub projection: ProjectionParams<T>,
}

/// A fixed, ordered collection of tensors that optimizers can walk.
pub trait ParamVec<T: Real>: Clone {
    fn tensors(&self) -> Vec<&Tensor<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

impl<T: Real> ParamVec<T> for Vec<Tensor<T>> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.iter_mut().collect()
    }
}

impl<T: Real> ParamVec<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.projection.tensors_mut());
        v
    }
}

impl<T: Real> ModelParams<T> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(&cfg.encoder, cfg.height, &mut rng);
        let projection = ProjectionParams::init(
            cfg.encoder.feature_size(),
            cfg.width,
            cfg.classes,
            cfg.slots,
            cfg.class_kernel,
            cfg.slot_kernel,
            &mut rng,
        );
        Self { encoder, projection }
    }

    /// Tensors in architecture order with their stable names.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = self.encoder.named();
        v.extend(self.projection.named());
        v
    }

    pub fn zeros_like(&self) -> Self {
        Self { encoder: self.encoder.zeros_like(), projection: self.projection.zeros_like() }
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams { encoder: self.encoder.cast(), projection: self.projection.cast() }
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, alpha);
        }
    }

    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expect = ModelParams::<T>::init(cfg, 0).zeros_like();
        let ours = self.named();
        let theirs = expect.named();
        if ours.len() != theirs.len() {
            return Err(Error::Config(format!("{} parameter tensors, config implies {}", ours.len(), theirs.len())));
        }
        for ((n1, t1), (n2, t2)) in ours.iter().zip(&theirs) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(Error::Config(format!("parameter {n1} {:?} does not match {n2} {:?}", t1.shape(), t2.shape())));
            }
        }
        Ok(())
    }
}

/// Per-slot decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub confidences: Vec<f32>,
}

/// All intermediate matrices of a single forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Real = f32> {
    /// `F × T`
    pub latent: Tensor<T>,
    /// class convolution output, `N × T`
    pub class_map: Tensor<T>,
    /// `M × N` pre-softmax
    pub logits: Tensor<T>,
    /// `M × N` row-stochastic
    pub probs: Tensor<T>,
}

/// Loss and averaged gradients over a batch.
#[derive(Debug, Clone)]
pub struct BatchGradients<T: Real = f32> {
    /// Sum of per-sample losses.
    pub loss_sum: f64,
    /// Samples whose every slot was predicted correctly.
    pub exact_matches: usize,
    pub count: usize,
    /// Mean gradient over the batch.
    pub grads: ModelParams<T>,
}

#[derive(Debug, Clone)]
pub struct GeoTrNet<T: Real = f32> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

/// Index of the row maximum, lowest index on ties.
pub fn argmax<T: Real>(row: &[T]) -> (usize, T) {
    let mut best = (0, row[0]);
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

impl<T: Real> GeoTrNet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<()> {
        let expect = [self.config.height, self.config.width];
        if image.shape() != expect {
            return Err(Error::dim(format!("model expects image {:?}, got {:?}", expect, image.shape())));
        }
        image.ensure_finite("input image")
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.config.slots {
            return Err(Error::dim(format!("{} target labels for {} slots", labels.len(), self.config.slots)));
        }
        Ok(())
    }

    pub fn trace(&self, image: &Tensor<T>) -> Result<ForwardTrace<T>> {
        self.check_image(image)?;
        let (mut latents, _) = encode_batch(&[image], &self.params.encoder)?;
        let latent = latents.remove(0);
        let c = project_with_cache(&latent, &self.params.projection)?;
        Ok(ForwardTrace { latent, class_map: c.class_map, logits: c.logits, probs: c.probs })
    }

    /// `M × N` matrix of per-slot class probabilities.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.trace(image)?.probs)
    }

    /// Forward pass over many images at once; equivalent to calling
    /// [`forward`](Self::forward) on each.
    pub fn forward_batch(&self, images: &[&Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        for img in images {
            self.check_image(img)?;
        }
        let (latents, _) = encode_batch(images, &self.params.encoder)?;
        latents.iter().map(|z| Ok(project_with_cache(z, &self.params.projection)?.probs)).collect()
    }

    pub fn predict(&self, image: &Tensor<T>) -> Result<Prediction> {
        Ok(Self::decide(&self.forward(image)?))
    }

    pub fn decide(probs: &Tensor<T>) -> Prediction {
        let cols = probs.shape()[1];
        let (labels, confidences) = probs
            .data()
            .chunks_exact(cols)
            .map(|row| {
                let (i, v) = argmax(row);
                (i, v.to_f64() as f32)
            })
            .unzip();
        Prediction { labels, confidences }
    }

    /// Renders class indices through the label table.
    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().map(|&i| self.config.labels.get(i).copied().unwrap_or('?')).collect()
    }

    fn batch_pass(
        &self,
        images: &[&Tensor<T>],
        labels: &[&[usize]],
        want_input: bool,
    ) -> Result<(f64, usize, ModelParams<T>, Option<Vec<Tensor<T>>>)> {
        let (latents, enc_cache) = encode_batch(images, &self.params.encoder)?;
        let n = T::from_f64(self.config.classes as f64);
        let mut loss_sum = 0.0;
        let mut exact = 0;
        let mut proj_grads = self.params.projection.zeros_like();
        let mut d_latents = Vec::with_capacity(images.len());
        for (z, y) in latents.iter().zip(labels) {
            let c = project_with_cache(z, &self.params.projection)?;
            loss_sum += cce_loss(&c.probs, y)?.to_f64();
            if Self::decide(&c.probs).labels == *y {
                exact += 1;
            }
            let g_logits = cce_logit_grad(&c.probs, y, n)?;
            let g = project_backward_logits(&c, &g_logits)?;
            for (a, b) in proj_grads.tensors_mut().into_iter().zip(g.params.named()) {
                a.add_scaled(b.1, T::ONE);
            }
            d_latents.push(g.latent);
        }
        let (enc_grads, inputs) = encode_batch_backward(&enc_cache, &self.params.encoder, &d_latents, want_input)?;
        Ok((loss_sum, exact, ModelParams { encoder: enc_grads, projection: proj_grads }, inputs))
    }

    /// Loss, exact-match count and batch-mean parameter gradients.
    pub fn batch_gradients(&self, images: &[&Tensor<T>], labels: &[&[usize]]) -> Result<BatchGradients<T>> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::dim(format!("{} images with {} label sequences", images.len(), labels.len())));
        }
        for (img, y) in images.iter().zip(labels) {
            self.check_image(img)?;
            self.check_labels(y)?;
        }
        let parts: Vec<_> = images
            .par_chunks(GRAD_CHUNK)
            .zip(labels.par_chunks(GRAD_CHUNK))
            .map(|(imgs, ys)| self.batch_pass(imgs, ys, false))
            .collect::<Result<Vec<_>>>()?;
        let mut iter = parts.into_iter();
        let (mut loss_sum, mut exact, mut grads, _) = iter.next().expect("non-empty batch");
        for (l, e, g, _) in iter {
            loss_sum += l;
            exact += e;
            grads.add_scaled(&g, T::ONE);
        }
        let inv = T::ONE / T::from_f64(images.len() as f64);
        for t in grads.tensors_mut() {
            t.scale(inv);
        }
        Ok(BatchGradients { loss_sum, exact_matches: exact, count: images.len(), grads })
    }

    /// Loss of a single image against target labels.
    pub fn loss(&self, image: &Tensor<T>, labels: &[usize]) -> Result<T> {
        self.check_labels(labels)?;
        cce_loss(&self.forward(image)?, labels)
    }

    /// Gradient of the loss with respect to every input pixel.
    pub fn input_gradient(&self, image: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
        let mut g = self.input_gradient_batch(&[image], &[labels])?;
        Ok(g.remove(0))
    }

    pub fn input_gradient_batch(&self, images: &[&Tensor<T>], labels: &[&[usize]]) -> Result<Vec<Tensor<T>>> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::dim(format!("{} images with {} label sequences", images.len(), labels.len())));
        }
        for (img, y) in images.iter().zip(labels) {
            self.check_image(img)?;
            self.check_labels(y)?;
        }
        let parts = images
            .par_chunks(GRAD_CHUNK)
            .zip(labels.par_chunks(GRAD_CHUNK))
            .map(|(imgs, ys)| self.batch_pass(imgs, ys, true).map(|r| r.3.expect("input gradients requested")))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gradcheck::{grad_check, DEFAULT_STEP};
    use rand::Rng;

    fn toy_config() -> ModelConfig {
        let mut c = ModelConfig::digits(32, 12, 3);
        c.encoder.hidden_per_direction = 4;
        c.encoder.second_hidden = 5;
        c.classes = 4;
        c.labels = vec!['a', 'b', 'c', 'd'];
        c
    }

    fn rand_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor<f64> {
        Tensor::new(&[h, w], (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn base_param_count_breakdown() {
        let m = GeoTrNet::<f32>::new(ModelConfig::base(), 0).unwrap();
        // Bi-LSTM 2·4·24·(28+24+1), LSTM 4·48·(48+48+1), class conv 10·48·3+10, slot conv 8·224+8
        let expect = 2 * 96 * 53 + 192 * 97 + (10 * 48 * 3 + 10) + (8 * 224 + 8);
        assert_eq!(m.param_count(), expect);
        assert_eq!(expect, 32_050);
        assert!(m.param_count() < 83_000);
    }

    #[test]
    fn tiny_conv_param_count() {
        // a single N=2, F=3, k=1 conv with bias
        let p = ProjectionParams::<f32>::zeros(3, 1, 2, 1, 1, 1);
        assert_eq!(p.class_w.len() + p.class_b.len(), 8);
    }

    #[test]
    fn fresh_model_rows_are_distributions() {
        let m = GeoTrNet::<f32>::new(ModelConfig::base(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = rand_image(&mut rng, 28, 224).cast();
        let p = m.forward(&img).unwrap();
        assert_eq!(p.shape(), &[8, 10]);
        for r in 0..8 {
            let s: f32 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
        let pred = m.predict(&img).unwrap();
        assert!(pred.labels.iter().all(|&l| l < 10));
    }

    #[test]
    fn wrong_image_shape() {
        let m = GeoTrNet::<f32>::new(ModelConfig::base(), 3).unwrap();
        assert!(matches!(m.forward(&Tensor::zeros(&[28, 223])), Err(Error::Dimension(_))));
        assert!(matches!(m.input_gradient(&Tensor::zeros(&[27, 224]), &[0; 8]), Err(Error::Dimension(_))));
    }

    #[test]
    fn decide_breaks_ties_low() {
        let uniform = Tensor::<f32>::full(&[2, 4], 0.25);
        let p = GeoTrNet::decide(&uniform);
        assert_eq!(p.labels, vec![0, 0]);
        assert_eq!(p.confidences, vec![0.25, 0.25]);
        let row = Tensor::<f32>::from_rows(&[vec![0.1, 0.7, 0.2]]).unwrap();
        let p = GeoTrNet::decide(&row);
        assert_eq!((p.labels[0], p.confidences[0]), (1, 0.7));
    }

    #[test]
    fn decode_renders_space() {
        let m = GeoTrNet::<f32>::new(ModelConfig::base().with_space_class(), 0).unwrap();
        assert_eq!(m.config.classes, 11);
        assert_eq!(m.decode(&[1, 10, 2]), "1 2");
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::base();
        c.labels[3] = '0';
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::base();
        c.classes = 11;
        assert!(c.validate().is_err());
    }

    #[test]
    fn canonical_json_has_sorted_keys() {
        let j = ModelConfig::base().to_canonical_json();
        let keys: Vec<usize> = ["class_kernel", "classes", "encoder", "height", "labels", "slot_kernel", "slots", "width"]
            .iter()
            .map(|k| j.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{j}");
    }

    #[test]
    fn batch_forward_matches_single() {
        let m = GeoTrNet::<f64>::new(toy_config(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imgs: Vec<_> = (0..3).map(|_| rand_image(&mut rng, 12, 32)).collect();
        let refs: Vec<_> = imgs.iter().collect();
        for (img, p) in imgs.iter().zip(m.forward_batch(&refs).unwrap()) {
            assert!(m.forward(img).unwrap().max_abs_diff(&p) < 1e-12);
        }
    }

    #[test]
    fn full_model_gradient_check() {
        for enc in [EncoderConfig { hidden_per_direction: 4, second_hidden: 5, ..EncoderConfig::default() }, {
            EncoderConfig { tcn_channels: vec![6, 5], tcn_dilations: vec![1, 2], ..EncoderConfig::tcn() }
        }] {
            let cfg = toy_config().with_encoder(enc);
            let m = GeoTrNet::<f64>::new(cfg.clone(), 5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let img = rand_image(&mut rng, 12, 32);
            let labels = vec![2usize, 0, 3];
            let bg = m.batch_gradients(&[&img], &[&labels]).unwrap();
            let params: Vec<Tensor<f64>> = m.params.tensors().into_iter().cloned().collect();
            let grads: Vec<Tensor<f64>> = bg.grads.tensors().into_iter().cloned().collect();
            let loss = |ts: &[Tensor<f64>]| -> f64 {
                let mut q = m.clone();
                for (dst, src) in q.params.tensors_mut().into_iter().zip(ts) {
                    *dst = src.clone();
                }
                q.loss(&img, &labels).unwrap()
            };
            let err = grad_check(loss, &params, &grads, DEFAULT_STEP).unwrap();
            assert!(err < 1e-3, "{:?}: {err}", cfg.encoder.kind);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = GeoTrNet::<f64>::new(toy_config(), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = rand_image(&mut rng, 12, 32);
        let labels = vec![1usize, 1, 3];
        let g = m.input_gradient(&img, &labels).unwrap();
        assert_eq!(g.shape(), img.shape());
        let err = grad_check(|ts| m.loss(&ts[0], &labels).unwrap(), &[img], &[g], DEFAULT_STEP).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn chunked_gradients_match_whole_batch() {
        let m = GeoTrNet::<f64>::new(toy_config(), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = GRAD_CHUNK + 3;
        let imgs: Vec<_> = (0..n).map(|_| rand_image(&mut rng, 12, 32)).collect();
        let labels: Vec<Vec<usize>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0..4)).collect()).collect();
        let refs: Vec<_> = imgs.iter().collect();
        let lrefs: Vec<&[usize]> = labels.iter().map(Vec::as_slice).collect();
        let bg = m.batch_gradients(&refs, &lrefs).unwrap();
        let mut manual = m.params.zeros_like();
        for (img, y) in imgs.iter().zip(&labels) {
            let g = m.batch_gradients(&[img], &[y]).unwrap();
            manual.add_scaled(&g.grads, 1.0 / n as f64);
        }
        for (a, b) in bg.grads.tensors().into_iter().zip(manual.tensors()) {
            assert!(a.max_abs_diff(b) < 1e-10);
        }
    }

    #[test]
    fn cast_preserves_values() {
        let m = GeoTrNet::<f32>::new(toy_config(), 1).unwrap();
        let back: ModelParams<f32> = m.params.cast::<f64>().cast();
        assert_eq!(back, m.params);
    }
}
