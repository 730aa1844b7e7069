//! Frame, video, and semantic fidelity metrics with per-scale reporting.

pub mod bench;
pub mod metrics;
pub mod perceptual;
pub mod report;
pub mod semantic;

pub use bench::{bench_run, BenchConfig, BenchContext, BenchItem};
pub use metrics::{
    aesthetic_quality, dynamic_degree, frame_fidelity, imaging_quality, motion_smoothness, psnr, ssim,
    temporal_flickering, FrameFidelity,
};
pub use perceptual::{frechet_distance, frechet_feature_distance, perceptual_distance, ConvEmbedder};
pub use report::{cross_scale_variance, BenchReport, ClipScores, Log10Variance, MetricResult, METRICS};
pub use semantic::{semantic_fidelity, SemanticProbe};
