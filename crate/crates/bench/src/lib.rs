//! Fixtures shared by the benchmarks.

use semfi_core::conditioning::{GuidancePack, RandomProjectionEncoder};
use semfi_core::data::synth::{generate_video, SynthConfig};
use semfi_core::model::{DenoiserConfig, LatentCodec, TextEncoder, TrainExample};
use semfi_core::rng::SeedStream;
use semfi_core::VideoClip;

/// A rendered synthetic clip of exactly `n` frames at `size`×`size`.
pub fn clip(n: usize, size: usize, seed: u64) -> VideoClip {
    let cfg = SynthConfig {
        num_videos: 1,
        height: size,
        width: size,
        min_frames: n,
        max_frames: n,
        fps_choices: vec![24],
        ..SynthConfig::default()
    };
    generate_video(&cfg, SeedStream::new(seed), 0).expect("valid synth config").clip
}

/// A training batch of `batch` clips with `n` frames each.
pub fn batch(cfg: &DenoiserConfig, n: usize, batch: usize) -> Vec<TrainExample> {
    let codec = LatentCodec::new(cfg.latent_pool);
    let image = RandomProjectionEncoder::new(cfg.d_text, cfg.image_encoder_seed);
    let text = TextEncoder::new(cfg.text_buckets, cfg.d_text, cfg.text_seed);
    (0..batch)
        .map(|i| {
            let c = clip(n, cfg.height, i as u64);
            TrainExample {
                x0: codec.encode_clip(&c),
                text: text.encode(&c.caption),
                pack: GuidancePack::dual_endpoint(&c.first(), &c.last(), n, &codec, &image).expect("valid endpoints"),
            }
        })
        .collect()
}
