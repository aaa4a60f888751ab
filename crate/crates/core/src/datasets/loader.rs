use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::digitgen::coco::{category_char, read_coco_manifest, CocoManifest, MANIFEST_NAME};
use crate::digitgen::pgm::read_pgm_bytes;
use crate::error::{Error, Result};
use crate::math::Tensor;
use crate::model::ModelConfig;

/// A manifest directory whose images have been checked to exist.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub dir: PathBuf,
    pub manifest_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub slots: usize,
    /// Display character per category id.
    pub labels: Vec<char>,
    /// `(image id, file name, slot labels)` in manifest order.
    samples: Vec<(u64, String, Vec<usize>)>,
}

/// Opens `dir/manifest.json` and verifies that every referenced image is present.
pub fn load_manifest(dir: impl AsRef<Path>) -> Result<DatasetHandle> {
    let dir = dir.as_ref().to_path_buf();
    let manifest_path = dir.join(MANIFEST_NAME);
    let m: CocoManifest = read_coco_manifest(&manifest_path)?;

    let mut labels = vec![None; m.categories.len()];
    for c in &m.categories {
        let ch = category_char(&c.name)
            .ok_or_else(|| Error::format(&manifest_path, format!("category name {:?} is not one character", c.name)))?;
        *labels.get_mut(c.id).ok_or_else(|| Error::format(&manifest_path, "category ids must be 0..N"))? = Some(ch);
    }
    let labels: Vec<char> = labels
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| Error::format(&manifest_path, "category ids must be 0..N"))?;

    // slot labels ordered left to right
    let mut per_image: BTreeMap<u64, Vec<(u32, u64, usize)>> = BTreeMap::new();
    for a in &m.annotations {
        if a.category_id >= labels.len() {
            return Err(Error::Sample { image_id: a.image_id, reason: format!("unknown category {}", a.category_id) });
        }
        per_image.entry(a.image_id).or_default().push((a.bbox[0], a.id, a.category_id));
    }

    let (mut width, mut height, mut slots) = (0, 0, 0);
    let mut samples = Vec::with_capacity(m.images.len());
    for (k, img) in m.images.iter().enumerate() {
        let mut anns = per_image.remove(&img.id).unwrap_or_default();
        anns.sort_unstable();
        let ys: Vec<usize> = anns.into_iter().map(|a| a.2).collect();
        if k == 0 {
            (width, height, slots) = (img.width as usize, img.height as usize, ys.len());
        }
        if (img.width as usize, img.height as usize) != (width, height) {
            return Err(Error::Sample {
                image_id: img.id,
                reason: format!("declared {}×{}, set is {width}×{height}", img.width, img.height),
            });
        }
        if ys.len() != slots || slots == 0 {
            return Err(Error::Sample { image_id: img.id, reason: format!("{} annotations, expected {slots}", ys.len()) });
        }
        if !dir.join(&img.file_name).is_file() {
            return Err(Error::Sample { image_id: img.id, reason: format!("missing image file {}", img.file_name) });
        }
        samples.push((img.id, img.file_name.clone(), ys));
    }
    if let Some((id, _)) = per_image.into_iter().next() {
        return Err(Error::Sample { image_id: id, reason: "annotations reference an unlisted image".into() });
    }
    Ok(DatasetHandle { dir, manifest_path, width, height, slots, labels, samples })
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Errors unless images and labels fit `cfg`.
    pub fn check_config(&self, cfg: &ModelConfig) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        if (self.width, self.height, self.slots) != (cfg.width, cfg.height, cfg.slots) {
            return Err(Error::Config(format!(
                "dataset {}×{} with {} slots does not fit model {}×{} with {}",
                self.width, self.height, self.slots, cfg.width, cfg.height, cfg.slots
            )));
        }
        if self.labels.len() > cfg.classes || self.labels.iter().zip(&cfg.labels).any(|(a, b)| a != b) {
            return Err(Error::Config(format!("dataset classes {:?} do not match model {:?}", self.labels, cfg.labels)));
        }
        Ok(())
    }

    fn read(&self, i: usize) -> Result<(u64, Vec<u8>, &[usize])> {
        let (id, name, ys) = &self.samples[i];
        let (w, h, px) = read_pgm_bytes(self.dir.join(name)).map_err(|e| Error::Sample {
            image_id: *id,
            reason: e.to_string(),
        })?;
        if (w, h) != (self.width, self.height) {
            return Err(Error::Sample {
                image_id: *id,
                reason: format!("file is {w}×{h}, manifest declares {}×{}", self.width, self.height),
            });
        }
        Ok((*id, px, ys))
    }

    /// `(image id, image, labels)` in manifest order.
    pub fn iter(&self) -> impl Iterator<Item = Result<(u64, Tensor<f32>, Vec<usize>)>> + '_ {
        (0..self.len()).map(move |i| {
            let (id, px, ys) = self.read(i)?;
            let img = Tensor::new(&[self.height, self.width], px.into_iter().map(|b| b as f32 / 255.0).collect())?;
            Ok((id, img, ys.to_vec()))
        })
    }

    pub fn load_all(&self) -> Result<Dataset> {
        let mut d = Dataset::new(self.width, self.height, self.slots);
        for i in 0..self.len() {
            let (id, px, ys) = self.read(i)?;
            d.push_bytes(id, self.height, self.width, &px, ys)?;
        }
        Ok(d)
    }
}
