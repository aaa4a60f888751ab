//! COCO-structured annotation manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::BBox;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: usize,
    /// `[x, y, w, h]`, top-left origin, absolute pixels.
    pub bbox: [u32; 4],
    pub area: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoManifest {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Category table for display labels; the space character is named `"space"`.
pub fn categories(labels: &[char]) -> Vec<CocoCategory> {
    labels
        .iter()
        .enumerate()
        .map(|(id, &c)| CocoCategory { id, name: if c == ' ' { "space".into() } else { c.to_string() } })
        .collect()
}

/// Character for a category name, inverse of [`categories`].
pub fn category_char(name: &str) -> Option<char> {
    if name == "space" {
        return Some(' ');
    }
    let mut it = name.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

/// PGM file name for a sample index.
pub fn image_file_name(index: u64) -> String {
    format!("{index:08}.pgm")
}

impl CocoManifest {
    pub fn new(labels: &[char]) -> Self {
        Self { images: Vec::new(), annotations: Vec::new(), categories: categories(labels) }
    }

    /// Registers one sticker; ids derive from `index` only.
    pub fn push_sample(&mut self, index: u64, width: usize, height: usize, labels: &[usize], boxes: &[BBox]) {
        let slots = labels.len() as u64;
        self.images.push(CocoImage {
            id: index,
            file_name: image_file_name(index),
            width: width as u32,
            height: height as u32,
        });
        for (s, (&l, b)) in labels.iter().zip(boxes).enumerate() {
            self.annotations.push(CocoAnnotation {
                id: index * slots + s as u64,
                image_id: index,
                category_id: l,
                bbox: [b.x, b.y, b.w, b.h],
                area: b.w as u64 * b.h as u64,
            });
        }
    }

    pub fn to_json(&self) -> String {
        crate::to_sorted_json(self)
    }
}

pub fn write_coco_manifest(manifest: &CocoManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_json()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_coco_manifest(path: impl AsRef<Path>) -> Result<CocoManifest> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_slice(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_and_layout() {
        let mut m = CocoManifest::new(&('0'..='9').collect::<Vec<_>>());
        m.push_sample(3, 224, 28, &[7], &[BBox { x: 10, y: 2, w: 15, h: 24 }]);
        assert_eq!(m.annotations[0].area, 360);
        assert_eq!(m.images[0].file_name, "00000003.pgm");
        assert_eq!(m.categories.len(), 10);
        assert_eq!(m.categories[9], CocoCategory { id: 9, name: "9".into() });
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["annotations", "categories", "images"]);
        assert_eq!(v["annotations"][0]["bbox"], serde_json::json!([10, 2, 15, 24]));
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = CocoManifest::new(&['0', '1', ' ']);
        m.push_sample(0, 20, 10, &[2, 1], &[BBox { x: 0, y: 0, w: 5, h: 5 }, BBox { x: 6, y: 1, w: 5, h: 5 }]);
        let p = dir.path().join(MANIFEST_NAME);
        write_coco_manifest(&m, &p).unwrap();
        assert_eq!(read_coco_manifest(&p).unwrap(), m);
        assert_eq!(m.categories[2].name, "space");
        assert_eq!(category_char("space"), Some(' '));
        assert_eq!(category_char("7"), Some('7'));
        assert_eq!(category_char("ab"), None);
    }

    #[test]
    fn malformed_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_NAME);
        std::fs::write(&p, "{\"images\": 3}").unwrap();
        assert!(matches!(read_coco_manifest(&p), Err(Error::Format { .. })));
    }
}
