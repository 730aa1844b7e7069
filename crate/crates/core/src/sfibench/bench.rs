//! Scores generated clips against their references and assembles a report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::scores::PyramidFlow;
use crate::error::Result;
use crate::rng::SeedStream;
use crate::video::{Frame, VideoClip};

use super::metrics::{dynamic_degree, frame_fidelity, motion_smoothness, temporal_flickering, FrameInterpolator, InterpolatorKind};
use super::perceptual::{frechet_distance, perceptual_distance, ConvEmbedder};
use super::report::{BenchReport, ClipScores};
use super::semantic::{semantic_fidelity, SemanticProbe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub embedder_seed: u64,
    pub probe_seed: u64,
    pub probe_videos: usize,
    pub probe_frames: usize,
    pub interpolator: InterpolatorKind,
    pub sampling_steps: usize,
    /// Endpoint clamping for the clips scored on video metrics.
    pub clamp_endpoints: bool,
    /// Score frame fidelity on a second, unclamped sample (clamped endpoints make it vacuous).
    pub unclamped_frame_fidelity: bool,
    /// Source videos drawn from the test split.
    pub test_videos: usize,
    pub seed: u64,
    /// Also write one PNG bar chart per metric.
    pub charts: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            embedder_seed: 1234,
            probe_seed: 77,
            probe_videos: 300,
            probe_frames: 17,
            interpolator: InterpolatorKind::Average,
            sampling_steps: 20,
            clamp_endpoints: true,
            unclamped_frame_fidelity: true,
            test_videos: 20,
            seed: 0,
            charts: false,
        }
    }
}

pub struct BenchContext {
    pub embedder: ConvEmbedder,
    pub probe: SemanticProbe,
    pub interpolator: Box<dyn FrameInterpolator>,
    pub estimator: PyramidFlow,
}

impl BenchContext {
    pub fn new(cfg: &BenchConfig, height: usize, width: usize, channels: usize) -> Result<Self> {
        Ok(BenchContext {
            embedder: ConvEmbedder {
                seed: cfg.embedder_seed,
                ..ConvEmbedder::default()
            },
            probe: SemanticProbe::fit_synthetic(
                SeedStream::new(cfg.probe_seed),
                cfg.probe_videos,
                cfg.probe_frames,
                height,
                width,
                channels,
            )?,
            interpolator: cfg.interpolator.build(),
            estimator: PyramidFlow::default(),
        })
    }
}

/// A generated clip paired with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchItem {
    pub clip_id: String,
    pub scale: usize,
    pub reference: VideoClip,
    pub generated: VideoClip,
    /// Clip whose endpoints are scored for frame fidelity; `generated` when absent.
    pub endpoint_sample: Option<VideoClip>,
}

/// Per-clip scores plus the frame features needed for the set-level Fréchet distance.
pub fn evaluate_item(item: &BenchItem, ctx: &BenchContext) -> Result<(ClipScores, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let gen = &item.generated;
    let refc = &item.reference;
    let ff = frame_fidelity(
        item.endpoint_sample.as_ref().unwrap_or(gen),
        &refc.first(),
        &refc.last(),
        &ctx.embedder,
    )?;
    let mut values = BTreeMap::new();
    values.insert("video_lpips".to_string(), perceptual_distance(gen, refc, &ctx.embedder)?);
    values.insert("psnr".to_string(), ff.psnr());
    values.insert("ssim".to_string(), ff.ssim());
    values.insert("frame_lpips".to_string(), ff.perceptual());
    values.insert("semantic".to_string(), semantic_fidelity(gen, &refc.caption, &ctx.probe)?);
    values.insert("tf".to_string(), temporal_flickering(gen)?);
    values.insert("ms".to_string(), motion_smoothness(gen, ctx.interpolator.as_ref())?);
    values.insert("dd".to_string(), dynamic_degree(gen, &ctx.estimator)?);
    let feats = |c: &VideoClip| -> Vec<Vec<f64>> { c.frames().map(|f: Frame| ctx.embedder.frame_features(&f)).collect() };
    Ok((
        ClipScores {
            clip_id: item.clip_id.clone(),
            scale: item.scale,
            values,
        },
        feats(gen),
        feats(refc),
    ))
}

/// Evaluates every item; items that fail are logged, excluded, and counted.
pub fn bench_run(items: &[BenchItem], scales: &[usize], ctx: &BenchContext, prior_failures: usize) -> Result<BenchReport> {
    let mut per_clip = Vec::with_capacity(items.len());
    let mut by_scale: BTreeMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    let mut failures = prior_failures;
    for item in items {
        match evaluate_item(item, ctx) {
            Ok((scores, g, r)) => {
                let e = by_scale.entry(item.scale).or_default();
                e.0.extend(g);
                e.1.extend(r);
                per_clip.push(scores);
            }
            Err(e) => {
                log::warn!("clip {} failed evaluation: {e}", item.clip_id);
                failures += 1;
            }
        }
    }
    let mut fid_cells = BTreeMap::new();
    let (mut pooled_g, mut pooled_r) = (Vec::new(), Vec::new());
    for (s, (g, r)) in &by_scale {
        match frechet_distance(g, r) {
            Ok(d) => {
                fid_cells.insert(*s, d);
            }
            Err(e) => log::warn!("no Fréchet distance at scale {s}: {e}"),
        }
        pooled_g.extend(g.iter().cloned());
        pooled_r.extend(r.iter().cloned());
    }
    let fid_all = frechet_distance(&pooled_g, &pooled_r).ok();
    let mut set_level = BTreeMap::new();
    set_level.insert("fid".to_string(), (fid_cells, fid_all));
    Ok(BenchReport::assemble(scales, per_clip, set_level, failures))
}
