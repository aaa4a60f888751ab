use crate::error::{Error, Result};
use crate::math::Tensor;

/// In-memory labelled sticker set with 8-bit pixels.
///
/// Pixels are stored quantised exactly as a PGM file would hold them, so a
/// set loaded from disk and one built from rendered tensors are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    width: usize,
    height: usize,
    slots: usize,
    pixels: Vec<u8>,
    labels: Vec<usize>,
    ids: Vec<u64>,
}

/// `round(v · 255)` after clamping to `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Dataset {
    pub fn new(width: usize, height: usize, slots: usize) -> Self {
        Self { width, height, slots, pixels: Vec::new(), labels: Vec::new(), ids: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn check(&self, id: u64, shape: &[usize], labels: &[usize]) -> Result<()> {
        if shape != [self.height, self.width] {
            return Err(Error::Sample {
                image_id: id,
                reason: format!("shape {shape:?}, expected [{}, {}]", self.height, self.width),
            });
        }
        if labels.len() != self.slots {
            return Err(Error::Sample { image_id: id, reason: format!("{} labels, expected {}", labels.len(), self.slots) });
        }
        Ok(())
    }

    pub fn push(&mut self, id: u64, image: &Tensor<f32>, labels: &[usize]) -> Result<()> {
        self.check(id, image.shape(), labels)?;
        self.pixels.extend(image.data().iter().map(|&v| quantize(v)));
        self.labels.extend_from_slice(labels);
        self.ids.push(id);
        Ok(())
    }

    pub fn push_bytes(&mut self, id: u64, height: usize, width: usize, pixels: &[u8], labels: &[usize]) -> Result<()> {
        self.check(id, &[height, width], labels)?;
        if pixels.len() != height * width {
            return Err(Error::Sample { image_id: id, reason: format!("{} pixels for {height}×{width}", pixels.len()) });
        }
        self.pixels.extend_from_slice(pixels);
        self.labels.extend_from_slice(labels);
        self.ids.push(id);
        Ok(())
    }

    /// Image `i` as `[H, W]` in `[0, 1]`.
    pub fn image(&self, i: usize) -> Tensor<f32> {
        let n = self.width * self.height;
        let data = self.pixels[i * n..(i + 1) * n].iter().map(|&b| b as f32 / 255.0).collect();
        Tensor::new(&[self.height, self.width], data).expect("stored shape is consistent")
    }

    pub fn pixels(&self, i: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn labels(&self, i: usize) -> &[usize] {
        &self.labels[i * self.slots..(i + 1) * self.slots]
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    /// Samples `start..end` as a new set.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let n = self.width * self.height;
        Self {
            width: self.width,
            height: self.height,
            slots: self.slots,
            pixels: self.pixels[start * n..end * n].to_vec(),
            labels: self.labels[start * self.slots..end * self.slots].to_vec(),
            ids: self.ids[start..end].to_vec(),
        }
    }
}
