//! Sticker layout and augmentation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::font::{FontVariant, GlyphAtlas};
use crate::datasets::resize_bilinear;
use crate::error::{Error, Result};
use crate::math::Tensor;
use crate::rng::sample_rng;

/// Layout attempts before an overflowing sticker is reported.
pub const MAX_LAYOUT_RETRIES: usize = 10;

/// Class index of the space glyph when enabled.
pub const SPACE_CLASS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmentations {
    pub random_spacing: bool,
    pub space_class: bool,
    pub dynamic_background: bool,
    pub dynamic_width: bool,
    pub noise: bool,
    pub shadow_patches: bool,
    pub light_bursts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRanges {
    /// Gap as a multiple of the base spacing.
    pub spacing_factor: (f64, f64),
    /// Horizontal glyph scale.
    pub width_scale: (f64, f64),
    pub background: (f64, f64),
    /// Minimum `|fg − bg|` under dynamic background.
    pub min_contrast: f64,
    pub noise_sigma: f64,
    pub shadow_count: (usize, usize),
    /// Intensity multiplier inside a shadow rectangle.
    pub shadow_factor: (f64, f64),
    pub burst_count: (usize, usize),
    /// Added intensity at a burst centre, falling off linearly to zero.
    pub burst_peak: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            spacing_factor: (0.25, 2.0),
            width_scale: (0.6, 1.4),
            background: (0.0, 0.6),
            min_contrast: 0.3,
            noise_sigma: 0.05,
            shadow_count: (0, 2),
            shadow_factor: (0.5, 0.9),
            burst_count: (0, 1),
            burst_peak: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub width: usize,
    pub height: usize,
    pub slots: usize,
    /// Base gap between neighbouring glyphs, pixels.
    pub spacing: usize,
    pub augment: Augmentations,
    pub ranges: AugmentRanges,
    /// One variant is drawn per sticker.
    pub fonts: Vec<FontVariant>,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            width: 224,
            height: 28,
            slots: 8,
            spacing: 8,
            augment: Augmentations::default(),
            ranges: AugmentRanges::default(),
            fonts: vec![FontVariant::Plain],
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_augment(mut self, augment: Augmentations) -> Self {
        self.augment = augment;
        self
    }

    pub fn classes(&self) -> usize {
        if self.augment.space_class {
            11
        } else {
            10
        }
    }

    /// Display labels for the class indices.
    pub fn labels(&self) -> Vec<char> {
        let mut v: Vec<char> = ('0'..='9').collect();
        if self.augment.space_class {
            v.push(' ');
        }
        v
    }

    pub fn validate(&self, glyph: (usize, usize)) -> Result<()> {
        let r = &self.ranges;
        let ordered = |(a, b): (f64, f64)| a <= b && a.is_finite() && b.is_finite();
        if self.width == 0 || self.height == 0 || self.slots == 0 {
            return Err(Error::Config("canvas and slot count must be positive".into()));
        }
        if self.fonts.is_empty() {
            return Err(Error::Config("at least one font variant is required".into()));
        }
        if !ordered(r.spacing_factor) || r.spacing_factor.0 < 0.0 {
            return Err(Error::Config("spacing_factor must be an ordered non-negative range".into()));
        }
        if !ordered(r.width_scale) || r.width_scale.0 <= 0.0 {
            return Err(Error::Config("width_scale must be an ordered positive range".into()));
        }
        if !ordered(r.background) || r.background.0 < 0.0 || r.background.1 > 1.0 {
            return Err(Error::Config("background must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&r.min_contrast)
            || (r.background.0 + r.min_contrast > 1.0 && r.background.1 - r.min_contrast < 0.0)
        {
            return Err(Error::Config("min_contrast cannot be met within [0, 1]".into()));
        }
        if !(r.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&r.burst_peak) {
            return Err(Error::Config("noise_sigma and burst_peak out of bounds".into()));
        }
        if !ordered(r.shadow_factor) || r.shadow_factor.0 < 0.0 || r.shadow_factor.1 > 1.0 {
            return Err(Error::Config("shadow_factor must lie in [0, 1]".into()));
        }
        if r.shadow_count.0 > r.shadow_count.1 || r.burst_count.0 > r.burst_count.1 {
            return Err(Error::Config("count ranges must be ordered".into()));
        }
        let (gh, gw) = glyph;
        if gh > self.height {
            return Err(Error::Layout(format!("glyph height {gh} exceeds canvas height {}", self.height)));
        }
        let need = self.slots * gw + (self.slots - 1) * self.spacing;
        if need > self.width {
            return Err(Error::Layout(format!(
                "{} glyphs of width {gw} with spacing {} need {need} px, canvas is {}",
                self.slots, self.spacing, self.width
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box, top-left origin, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickerSample {
    pub index: u64,
    /// `[H, W]` in `[0, 1]`.
    pub image: Tensor<f32>,
    pub labels: Vec<usize>,
    /// One box per slot, left to right.
    pub boxes: Vec<BBox>,
}

/// A validated spec paired with its glyphs.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: GenSpec,
    atlas: GlyphAtlas,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn count(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi)
}

impl Generator {
    pub fn new(spec: GenSpec, atlas: GlyphAtlas) -> Result<Self> {
        for v in &spec.fonts {
            spec.validate(atlas.variant(*v).size())?;
        }
        Ok(Self { spec, atlas })
    }

    pub fn spec(&self) -> &GenSpec {
        &self.spec
    }

    /// Deterministic in `(spec, index)`.
    pub fn render(&self, index: u64) -> Result<StickerSample> {
        let mut rng = sample_rng(self.spec.seed, index);
        let classes = self.spec.classes();
        let labels: Vec<usize> = (0..self.spec.slots).map(|_| rng.gen_range(0..classes)).collect();
        self.compose(index, labels, rng)
    }

    /// Sticker `index` with the given slot classes instead of random ones.
    pub fn render_labels(&self, index: u64, labels: &[usize]) -> Result<StickerSample> {
        if labels.len() != self.spec.slots || labels.iter().any(|&l| l >= self.spec.classes()) {
            return Err(Error::Config(format!("labels {labels:?} do not fit {} slots", self.spec.slots)));
        }
        let mut rng = sample_rng(self.spec.seed, index);
        for _ in 0..self.spec.slots {
            rng.gen_range(0..self.spec.classes());
        }
        self.compose(index, labels.to_vec(), rng)
    }

    fn compose(&self, index: u64, labels: Vec<usize>, mut rng: ChaCha8Rng) -> Result<StickerSample> {
        let spec = &self.spec;
        let r = &spec.ranges;
        let aug = spec.augment;
        let font = spec.fonts[rng.gen_range(0..spec.fonts.len())];
        let glyphs = self.atlas.variant(font);
        let (gh, gw) = glyphs.size();

        // width scale, then spacing, resampled until the row fits
        let mut layout = None;
        for _ in 0..MAX_LAYOUT_RETRIES {
            let widths: Vec<usize> = (0..spec.slots)
                .map(|_| {
                    if aug.dynamic_width {
                        ((gw as f64 * uniform(&mut rng, r.width_scale)).round() as usize).max(1)
                    } else {
                        gw
                    }
                })
                .collect();
            let gaps: Vec<usize> = (0..spec.slots - 1)
                .map(|_| {
                    if aug.random_spacing {
                        (spec.spacing as f64 * uniform(&mut rng, r.spacing_factor)).round() as usize
                    } else {
                        spec.spacing
                    }
                })
                .collect();
            let total = widths.iter().sum::<usize>() + gaps.iter().sum::<usize>();
            if total <= spec.width {
                layout = Some((widths, gaps, total));
                break;
            }
        }
        let (widths, gaps, total) = layout.ok_or_else(|| {
            Error::Layout(format!("sample {index}: glyph row overflowed {} px after {MAX_LAYOUT_RETRIES} attempts", spec.width))
        })?;

        let (bg, fg) = if aug.dynamic_background {
            let bg = uniform(&mut rng, r.background);
            // fg uniform over [0, bg − c] ∪ [bg + c, 1]
            let below = (bg - r.min_contrast).max(0.0);
            let above = (1.0 - (bg + r.min_contrast)).max(0.0);
            let u = rng.gen::<f64>() * (below + above);
            let fg = if u < below { u } else { bg + r.min_contrast + (u - below) };
            (bg as f32, fg as f32)
        } else {
            (0.0, 1.0)
        };

        let (h, w) = (spec.height, spec.width);
        let mut img = vec![bg; h * w];
        let mut boxes = Vec::with_capacity(spec.slots);
        let top = (h - gh) / 2;
        let mut x = (w - total) / 2;
        for (s, (&label, &gw_s)) in labels.iter().zip(&widths).enumerate() {
            if label != SPACE_CLASS {
                let g = glyphs.digit(label);
                let g = if gw_s != gw { resize_bilinear(g, gw_s, gh)? } else { g.clone() };
                for gy in 0..gh {
                    for gx in 0..gw_s {
                        let a = g.data()[gy * gw_s + gx];
                        img[(top + gy) * w + x + gx] = bg + (fg - bg) * a;
                    }
                }
            }
            boxes.push(BBox { x: x as u32, y: top as u32, w: gw_s as u32, h: gh as u32 });
            x += gw_s + gaps.get(s).copied().unwrap_or(0);
        }

        if aug.shadow_patches {
            for _ in 0..count(&mut rng, r.shadow_count) {
                let rw = rng.gen_range(w / 8..=w / 2).max(1);
                let rh = rng.gen_range(h / 4..=h).max(1);
                let rx = rng.gen_range(0..=w - rw);
                let ry = rng.gen_range(0..=h - rh);
                let f = uniform(&mut rng, r.shadow_factor) as f32;
                for yy in ry..ry + rh {
                    for v in &mut img[yy * w + rx..yy * w + rx + rw] {
                        *v *= f;
                    }
                }
            }
        }
        if aug.light_bursts {
            for _ in 0..count(&mut rng, r.burst_count) {
                let cx = rng.gen_range(0.0..w as f64);
                let cy = rng.gen_range(0.0..h as f64);
                let radius = rng.gen_range(h as f64 / 2.0..2.0 * h as f64);
                for yy in 0..h {
                    for xx in 0..w {
                        let d = ((xx as f64 + 0.5 - cx).powi(2) + (yy as f64 + 0.5 - cy).powi(2)).sqrt();
                        if d < radius {
                            img[yy * w + xx] += (r.burst_peak * (1.0 - d / radius)) as f32;
                        }
                    }
                }
            }
        }
        if aug.noise && r.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, r.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
            for v in &mut img {
                *v += normal.sample(&mut rng) as f32;
            }
        }
        for v in &mut img {
            *v = v.clamp(0.0, 1.0);
        }

        Ok(StickerSample { index, image: Tensor::new(&[h, w], img)?, labels, boxes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(augment: Augmentations, seed: u64) -> Generator {
        Generator::new(GenSpec::default().with_augment(augment).with_seed(seed), GlyphAtlas::embedded()).unwrap()
    }

    fn all_on() -> Augmentations {
        Augmentations {
            random_spacing: true,
            space_class: true,
            dynamic_background: true,
            dynamic_width: true,
            noise: true,
            shadow_patches: true,
            light_bursts: true,
        }
    }

    #[test]
    fn plain_sticker_is_binary_with_ordered_boxes() {
        let s = gen(Augmentations::default(), 1).render(0).unwrap();
        assert_eq!(s.image.shape(), &[28, 224]);
        assert_eq!(s.labels.len(), 8);
        assert!(s.image.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(s.image.data().iter().any(|&v| v == 1.0));
        for pair in s.boxes.windows(2) {
            assert!(pair[0].x + pair[0].w + 8 == pair[1].x);
        }
        let last = s.boxes[7];
        assert!(last.x + last.w <= 224 && last.y + last.h <= 28);
    }

    #[test]
    fn ink_stays_inside_own_box() {
        let g = gen(Augmentations::default(), 2);
        for i in 0..20 {
            let s = g.render(i).unwrap();
            for y in 0..28 {
                for x in 0..224 {
                    if s.image.at2(y, x) > 0.0 {
                        let inside = s.boxes.iter().filter(|b| {
                            (b.x as usize..(b.x + b.w) as usize).contains(&x)
                                && (b.y as usize..(b.y + b.h) as usize).contains(&y)
                        });
                        assert_eq!(inside.count(), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn same_index_same_sticker_and_order_independence() {
        let g = gen(all_on(), 3);
        let a = g.render(17).unwrap();
        let _ = g.render(5).unwrap();
        assert_eq!(a, g.render(17).unwrap());
        assert_ne!(a.image, g.render(18).unwrap().image);
    }

    #[test]
    fn every_combination_stays_in_unit_range() {
        for bits in 0u8..128 {
            let aug = Augmentations {
                random_spacing: bits & 1 != 0,
                space_class: bits & 2 != 0,
                dynamic_background: bits & 4 != 0,
                dynamic_width: bits & 8 != 0,
                noise: bits & 16 != 0,
                shadow_patches: bits & 32 != 0,
                light_bursts: bits & 64 != 0,
            };
            let g = gen(aug, bits as u64);
            for i in 0..3 {
                let s = g.render(i).unwrap();
                assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(s.boxes.windows(2).all(|p| p[0].x < p[1].x));
            }
        }
    }

    #[test]
    fn space_class_appears_with_blank_boxes() {
        let g = gen(Augmentations { space_class: true, ..Augmentations::default() }, 4);
        let mut spaces = 0;
        for i in 0..50 {
            let s = g.render(i).unwrap();
            for (b, &l) in s.boxes.iter().zip(&s.labels) {
                if l == SPACE_CLASS {
                    spaces += 1;
                    for y in b.y..b.y + b.h {
                        for x in b.x..b.x + b.w {
                            assert_eq!(s.image.at2(y as usize, x as usize), 0.0);
                        }
                    }
                }
            }
        }
        assert!(spaces > 0);
    }

    #[test]
    fn dynamic_background_keeps_contrast() {
        let g = gen(Augmentations { dynamic_background: true, ..Augmentations::default() }, 5);
        for i in 0..50 {
            let s = g.render(i).unwrap();
            let mut vals: Vec<f32> = s.image.data().to_vec();
            vals.sort_by(f32::total_cmp);
            vals.dedup();
            let (lo, hi) = (vals[0], *vals.last().unwrap());
            assert!(hi - lo >= 0.3 - 1e-6, "{lo} {hi}");
        }
    }

    #[test]
    fn fixed_labels_share_the_random_sticker_layout() {
        let g = gen(all_on(), 7);
        let s = g.render(3).unwrap();
        assert_eq!(g.render_labels(3, &s.labels).unwrap(), s);
        let t = g.render_labels(3, &[1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        assert_eq!(t.labels, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(g.render_labels(3, &[1, 2]).is_err());
        assert!(g.render_labels(3, &[11; 8]).is_err());
    }

    #[test]
    fn infeasible_layouts_are_rejected() {
        let spec = GenSpec { slots: 20, ..GenSpec::default() };
        assert!(matches!(Generator::new(spec, GlyphAtlas::embedded()), Err(Error::Layout(_))));
        let spec = GenSpec { height: 10, ..GenSpec::default() };
        assert!(matches!(Generator::new(spec, GlyphAtlas::embedded()), Err(Error::Layout(_))));
        let mut spec = GenSpec::default();
        spec.ranges.width_scale = (1.5, 1.0);
        assert!(matches!(Generator::new(spec, GlyphAtlas::embedded()), Err(Error::Config(_))));
    }

    #[test]
    fn persistent_overflow_is_a_layout_error() {
        let mut spec = GenSpec { spacing: 0, ..GenSpec::default() }.with_augment(Augmentations {
            dynamic_width: true,
            ..Augmentations::default()
        });
        spec.ranges.width_scale = (3.0, 3.0);
        let g = Generator::new(spec, GlyphAtlas::embedded()).unwrap();
        assert!(matches!(g.render(0), Err(Error::Layout(_))));
    }

    #[test]
    fn digit_frequencies_are_uniform() {
        // 10K stickers, 8 slots: each count within 3σ of the binomial mean
        let g = gen(Augmentations::default(), 6);
        let mut counts = [0usize; 10];
        for i in 0..10_000 {
            for l in g.render(i).unwrap().labels {
                counts[l] += 1;
            }
        }
        let n = 80_000.0;
        let sigma = (n * 0.1 * 0.9f64).sqrt();
        for c in counts {
            assert!((c as f64 - n / 10.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
