use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use semfi_bench::{batch, clip};
use semfi_core::data::scores::{flow_score, PyramidFlow};
use semfi_core::model::{training_step, AdamW, Denoiser, DenoiserConfig, NoiseSchedule, TrainableSet};
use semfi_core::mol::{route, MoLState, MolConfig, DEFAULT_SCALES};
use semfi_core::rng::SeedStream;
use semfi_core::sfibench::{frechet_distance, ssim, temporal_flickering, ConvEmbedder};

fn routing(c: &mut Criterion) {
    c.bench_function("route_2_to_200", |b| {
        b.iter(|| (2..=200).map(|n| route(black_box(n), &DEFAULT_SCALES).unwrap()).sum::<usize>())
    });
}

fn train_step(c: &mut Criterion) {
    let cfg = DenoiserConfig::default();
    let schedule = NoiseSchedule::from_config(&cfg).unwrap();
    let mut group = c.benchmark_group("adapter_step_batch8");
    group.sample_size(10);
    for n in [5, 17] {
        let data = batch(&cfg, n, 8);
        let mut model = Denoiser::<f32>::new(cfg.clone(), SeedStream::new(0)).unwrap();
        let mut mol = MoLState::<f32>::new(&model.lora_layer_shapes(), &MolConfig::default(), SeedStream::new(1)).unwrap();
        let mut opt = AdamW::new(1e-4, 0.0);
        let mut i = 0u64;
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                i += 1;
                training_step(&mut model, Some(&mut mol), &data, TrainableSet::ADAPTERS, &mut opt, &schedule, SeedStream::new(i))
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let v = clip(17, 32, 3);
    let (a, b2) = (v.first(), v.last());
    c.bench_function("ssim_32x32", |b| b.iter(|| ssim(black_box(&a), black_box(&b2)).unwrap()));
    c.bench_function("temporal_flickering_17", |b| b.iter(|| temporal_flickering(black_box(&v)).unwrap()));
    let flow = PyramidFlow::default();
    c.bench_function("pyramid_flow_32x32", |b| b.iter(|| flow_score(&a, &b2, &flow).unwrap()));
    let emb = ConvEmbedder::default();
    let feats: Vec<Vec<f64>> = v.frames().map(|f| emb.frame_features(&f)).collect();
    c.bench_function("conv_features_32x32", |b| b.iter(|| emb.frame_features(black_box(&a))));
    c.bench_function("frechet_17x24", |b| b.iter(|| frechet_distance(&feats, &feats).unwrap()));
}

criterion_group!(benches, routing, train_step, metrics);
criterion_main!(benches);
