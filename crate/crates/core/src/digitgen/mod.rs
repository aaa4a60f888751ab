//! Synthetic sticker generator: fixed-slot digit rows with optional
//! spacing, width, intensity, shadow, burst and noise augmentations.

pub mod coco;
pub mod font;
pub mod pgm;
pub mod render;

use std::fs;
use std::path::{Path, PathBuf};

pub use coco::{read_coco_manifest, write_coco_manifest, CocoManifest, MANIFEST_NAME};
pub use font::{FontVariant, GlyphAtlas, GlyphSet};
pub use pgm::{read_pgm, write_pgm};
pub use render::{AugmentRanges, Augmentations, BBox, GenSpec, Generator, StickerSample, SPACE_CLASS};

use crate::error::{Error, Result};

/// Renders `count` stickers into `out_dir` one at a time and writes the
/// manifest last. Returns the manifest path.
pub fn generate_dataset(gen: &Generator, count: u64, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let spec = gen.spec();
    let mut manifest = CocoManifest::new(&spec.labels());
    for i in 0..count {
        let s = gen.render(i)?;
        let path = out_dir.join(coco::image_file_name(i));
        write_pgm(&s.image, &path).map_err(|e| partial(e, i, count))?;
        manifest.push_sample(i, spec.width, spec.height, &s.labels, &s.boxes);
    }
    let path = out_dir.join(MANIFEST_NAME);
    write_coco_manifest(&manifest, &path).map_err(|e| partial(e, count, count))?;
    Ok(path)
}

fn partial(e: Error, written: u64, count: u64) -> Error {
    match e {
        Error::Io { context, source } => {
            Error::Io { context: format!("{context} ({written} of {count} images written, no manifest)"), source }
        }
        other => other,
    }
}
