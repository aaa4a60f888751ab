//! Glyph bitmaps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pgm::read_pgm;
use crate::error::{Error, Result};
use crate::math::Tensor;

/// 5×7 digit shapes, one string per row, `#` for ink.
const DIGITS_5X7: [[&str; 7]; 10] = [
    [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
    ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
];

/// Integer upscaling applied to the embedded font.
pub const EMBEDDED_SCALE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FontVariant {
    Plain,
    Bold,
}

/// Ten digit glyphs of identical size, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSet {
    glyphs: Vec<Tensor<f32>>,
}

impl GlyphSet {
    pub fn new(glyphs: Vec<Tensor<f32>>) -> Result<Self> {
        if glyphs.len() != 10 {
            return Err(Error::Config(format!("glyph set needs 10 digits, got {}", glyphs.len())));
        }
        let shape = glyphs[0].shape().to_vec();
        for (d, g) in glyphs.iter().enumerate() {
            if g.shape() != shape.as_slice() || g.rank() != 2 {
                return Err(Error::Config(format!("glyph {d} has shape {:?}, expected {shape:?}", g.shape())));
            }
            if !g.data().iter().any(|&v| v > 0.5) {
                return Err(Error::Config(format!("glyph {d} has no ink above 0.5")));
            }
            if g.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Config(format!("glyph {d} has values outside [0, 1]")));
            }
        }
        Ok(Self { glyphs })
    }

    pub fn digit(&self, d: usize) -> &Tensor<f32> {
        &self.glyphs[d]
    }

    /// `(height, width)` shared by every glyph.
    pub fn size(&self) -> (usize, usize) {
        (self.glyphs[0].shape()[0], self.glyphs[0].shape()[1])
    }
}

fn embedded_digit(d: usize, scale: usize) -> Tensor<f32> {
    let rows = DIGITS_5X7[d];
    let (h, w) = (7 * scale, 5 * scale);
    let mut data = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            if rows[y / scale].as_bytes()[x / scale] == b'#' {
                data[y * w + x] = 1.0;
            }
        }
    }
    Tensor::new(&[h, w], data).expect("glyph shape")
}

/// 3×3 maximum filter.
fn dilate(g: &Tensor<f32>) -> Tensor<f32> {
    let (h, w) = (g.shape()[0], g.shape()[1]);
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut m = 0.0f32;
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    m = m.max(g.data()[yy * w + xx]);
                }
            }
            out[y * w + x] = m;
        }
    }
    Tensor::new(&[h, w], out).expect("glyph shape")
}

/// Glyph sets indexed by variant.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphAtlas {
    pub plain: GlyphSet,
    pub bold: GlyphSet,
}

impl GlyphAtlas {
    /// The built-in 15×21 font and its dilated bold form.
    pub fn embedded() -> Self {
        let plain: Vec<_> = (0..10).map(|d| embedded_digit(d, EMBEDDED_SCALE)).collect();
        let bold = plain.iter().map(dilate).collect();
        Self { plain: GlyphSet::new(plain).expect("embedded font"), bold: GlyphSet::new(bold).expect("embedded font") }
    }

    /// Reads `0.pgm` … `9.pgm` from `dir` as the plain variant; bold is derived by dilation.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let plain = (0..10).map(|d| read_pgm(dir.join(format!("{d}.pgm")))).collect::<Result<Vec<_>>>()?;
        let bold = plain.iter().map(dilate).collect();
        Ok(Self { plain: GlyphSet::new(plain)?, bold: GlyphSet::new(bold)? })
    }

    pub fn variant(&self, v: FontVariant) -> &GlyphSet {
        match v {
            FontVariant::Plain => &self.plain,
            FontVariant::Bold => &self.bold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digitgen::pgm::write_pgm;

    #[test]
    fn embedded_glyphs_have_ink_and_expected_size() {
        let a = GlyphAtlas::embedded();
        assert_eq!(a.plain.size(), (21, 15));
        for d in 0..10 {
            let plain = a.plain.digit(d);
            let bold = a.bold.digit(d);
            assert!(plain.data().iter().any(|&v| v > 0.5));
            let ink = |t: &Tensor<f32>| t.data().iter().filter(|&&v| v > 0.5).count();
            assert!(ink(bold) > ink(plain));
            // dilation never removes ink
            assert!(plain.data().iter().zip(bold.data()).all(|(p, b)| b >= p));
        }
    }

    #[test]
    fn glyphs_are_pairwise_distinct() {
        let a = GlyphAtlas::embedded();
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(a.plain.digit(i), a.plain.digit(j), "{i} vs {j}");
            }
        }
    }

    #[test]
    fn external_atlas_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let a = GlyphAtlas::embedded();
        for d in 0..10 {
            write_pgm(a.plain.digit(d), dir.path().join(format!("{d}.pgm"))).unwrap();
        }
        assert_eq!(GlyphAtlas::from_dir(dir.path()).unwrap(), a);

        write_pgm(&Tensor::zeros(&[21, 15]), dir.path().join("4.pgm")).unwrap();
        assert!(matches!(GlyphAtlas::from_dir(dir.path()), Err(Error::Config(_))));
        std::fs::remove_file(dir.path().join("4.pgm")).unwrap();
        assert!(matches!(GlyphAtlas::from_dir(dir.path()), Err(Error::Io { .. })));
    }
}
