//! Stickers assembled from 28×28 MNIST digits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::idx::IdxArray;
use super::{resize_bilinear, Dataset};
use crate::digitgen::coco::{image_file_name, write_coco_manifest, CocoManifest, MANIFEST_NAME};
use crate::digitgen::{write_pgm, BBox};
use crate::error::{Error, Result};
use crate::math::Tensor;
use crate::rng::sample_rng;

pub const PATCH: usize = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistStickerSpec {
    pub slots: usize,
    pub out_width: usize,
    pub out_height: usize,
    /// Random gaps between patches, uniform in `0..=max_gap` px.
    pub random_spacing: bool,
    pub max_gap: usize,
    /// Flip polarity to dark ink on a light ground.
    pub invert: bool,
    pub seed: u64,
}

impl Default for MnistStickerSpec {
    fn default() -> Self {
        Self { slots: 8, out_width: 244, out_height: 48, random_spacing: false, max_gap: 8, invert: false, seed: 0 }
    }
}

impl MnistStickerSpec {
    /// Canvas width before resizing: room for every patch and the widest gaps.
    pub fn canvas_width(&self) -> usize {
        let gaps = if self.random_spacing { (self.slots - 1) * self.max_gap } else { 0 };
        self.slots * PATCH + gaps
    }
}

fn check_sources(images: &IdxArray, labels: &IdxArray) -> Result<usize> {
    if images.dims.len() != 3 || images.dims[1] != PATCH || images.dims[2] != PATCH {
        return Err(Error::dim(format!("MNIST images must be N×28×28, got {:?}", images.dims)));
    }
    if labels.dims.len() != 1 || labels.dims[0] != images.dims[0] {
        return Err(Error::dim(format!("{:?} labels for {} images", labels.dims, images.dims[0])));
    }
    if images.dims[0] == 0 {
        return Err(Error::dim("no source digits"));
    }
    if let Some(&bad) = labels.data.iter().find(|&&l| l > 9) {
        return Err(Error::Index(format!("MNIST label {bad} is not a digit")));
    }
    Ok(images.dims[0])
}

/// Sticker `index`: `(image, labels, boxes)`. Deterministic in `(spec.seed, index)`.
pub fn compose_sticker(
    images: &IdxArray,
    labels: &IdxArray,
    spec: &MnistStickerSpec,
    index: u64,
) -> Result<(Tensor<f32>, Vec<usize>, Vec<BBox>)> {
    let n = check_sources(images, labels)?;
    if spec.slots == 0 {
        return Err(Error::Config("slots must be positive".into()));
    }
    let mut rng = sample_rng(spec.seed, index);
    let picks: Vec<usize> = (0..spec.slots).map(|_| rng.gen_range(0..n)).collect();
    let gaps: Vec<usize> = (0..spec.slots - 1)
        .map(|_| if spec.random_spacing { rng.gen_range(0..=spec.max_gap) } else { 0 })
        .collect();

    let canvas_w = spec.canvas_width();
    let row_w = spec.slots * PATCH + gaps.iter().sum::<usize>();
    let mut canvas = vec![0f32; PATCH * canvas_w];
    let mut x = (canvas_w - row_w) / 2;
    let mut spans = Vec::with_capacity(spec.slots);
    for (s, &p) in picks.iter().enumerate() {
        let src = images.item(p);
        for y in 0..PATCH {
            for dx in 0..PATCH {
                canvas[y * canvas_w + x + dx] = src[y * PATCH + dx] as f32 / 255.0;
            }
        }
        spans.push(x);
        x += PATCH + gaps.get(s).copied().unwrap_or(0);
    }
    if spec.invert {
        for v in &mut canvas {
            *v = 1.0 - *v;
        }
    }
    let canvas = Tensor::new(&[PATCH, canvas_w], canvas)?;
    let out = resize_bilinear(&canvas, spec.out_width, spec.out_height)?;
    let sx = spec.out_width as f64 / canvas_w as f64;
    let boxes = spans
        .iter()
        .map(|&x0| {
            let a = (x0 as f64 * sx).round() as u32;
            let b = (((x0 + PATCH) as f64) * sx).round().min(spec.out_width as f64) as u32;
            BBox { x: a, y: 0, w: b - a, h: spec.out_height as u32 }
        })
        .collect();
    let digits = picks.iter().map(|&p| labels.data[p] as usize).collect();
    Ok((out, digits, boxes))
}

/// `count` stickers held in memory.
pub fn compose_mnist_dataset(images: &IdxArray, labels: &IdxArray, spec: &MnistStickerSpec, count: u64) -> Result<Dataset> {
    let mut d = Dataset::new(spec.out_width, spec.out_height, spec.slots);
    for i in 0..count {
        let (img, y, _) = compose_sticker(images, labels, spec, i)?;
        d.push(i, &img, &y)?;
    }
    Ok(d)
}

/// Writes `count` stickers as PGM files plus a manifest; returns the manifest path.
pub fn compose_mnist_stickers(
    images: &IdxArray,
    labels: &IdxArray,
    spec: &MnistStickerSpec,
    count: u64,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    check_sources(images, labels)?;
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let mut manifest = CocoManifest::new(&('0'..='9').collect::<Vec<_>>());
    for i in 0..count {
        let (img, y, boxes) = compose_sticker(images, labels, spec, i)?;
        write_pgm(&img, out_dir.join(image_file_name(i)))?;
        manifest.push_sample(i, spec.out_width, spec.out_height, &y, &boxes);
    }
    let path = out_dir.join(MANIFEST_NAME);
    write_coco_manifest(&manifest, &path)?;
    Ok(path)
}
