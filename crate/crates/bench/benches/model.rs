use criterion::{black_box, criterion_group, criterion_main, Criterion};
use geotr_bench::stickers;
use geotr_core::encoder::EncoderConfig;
use geotr_core::{GeoTrNet, ModelConfig};

fn forward(c: &mut Criterion) {
    let data = stickers(16);
    let img = data.image(0);
    let mut g = c.benchmark_group("forward");
    for (name, cfg) in [
        ("bilstm", ModelConfig::base()),
        ("tcn", ModelConfig::base().with_encoder(EncoderConfig::tcn())),
    ] {
        let model = GeoTrNet::<f32>::new(cfg, 0).unwrap();
        g.bench_function(name, |b| b.iter(|| model.forward(black_box(&img)).unwrap()));
    }
    g.finish();
}

fn gradients(c: &mut Criterion) {
    let data = stickers(32);
    let images: Vec<_> = (0..32).map(|i| data.image(i)).collect();
    let refs: Vec<_> = images.iter().collect();
    let labels: Vec<&[usize]> = (0..32).map(|i| data.labels(i)).collect();
    let model = GeoTrNet::<f32>::new(ModelConfig::base(), 0).unwrap();
    let mut g = c.benchmark_group("batch_gradients");
    g.sample_size(10);
    g.bench_function("base batch 32", |b| b.iter(|| model.batch_gradients(black_box(&refs), &labels).unwrap()));
    g.finish();
}

criterion_group!(benches, forward, gradients);
criterion_main!(benches);
