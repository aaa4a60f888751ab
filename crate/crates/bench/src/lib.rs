//! Shared fixtures for the criterion benches.

use geotr_core::datasets::Dataset;
use geotr_core::digitgen::{GenSpec, Generator, GlyphAtlas};
use geotr_core::Tensor;

/// `count` plain digitgen stickers at the base geometry.
pub fn stickers(count: u64) -> Dataset {
    let gen = Generator::new(GenSpec::default().with_seed(42), GlyphAtlas::embedded()).expect("default spec is valid");
    let spec = gen.spec();
    let mut d = Dataset::new(spec.width, spec.height, spec.slots);
    for i in 0..count {
        let s = gen.render(i).expect("render");
        d.push(i, &s.image, &s.labels).expect("push");
    }
    d
}

/// Deterministic pseudo-random tensor in `[-1, 1)`.
pub fn ramp(shape: &[usize]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    let mut state = 0x9E37_79B9u32;
    let data = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            (state as f32 / u32::MAX as f32) * 2.0 - 1.0
        })
        .collect();
    Tensor::new(shape, data).expect("shape matches data")
}
