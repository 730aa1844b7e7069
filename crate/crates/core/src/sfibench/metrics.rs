//! Pixel-level frame and clip metrics.

use serde::{Deserialize, Serialize};

use crate::data::scores::{flow_score, sample_bilinear, FlowEstimator, PyramidFlow};
use crate::error::{Result, SemfiError};
use crate::video::{Frame, VideoClip};

use super::perceptual::ConvEmbedder;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 7;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(SemfiError::Shape(format!("inputs have {} and {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(SemfiError::Shape("empty inputs".into()));
    }
    Ok(())
}

/// PSNR in dB for data range 1, capped at [`PSNR_CAP`].
pub fn psnr_values(a: &[f32], b: &[f32]) -> Result<f64> {
    check_len(a, b)?;
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(SemfiError::Shape(format!("frame dims {:?} and {:?}", a.dims(), b.dims())));
    }
    psnr_values(&a.data, &b.data)
}

pub fn psnr_clip(a: &VideoClip, b: &VideoClip) -> Result<f64> {
    if (a.n_frames, a.frame_dims()) != (b.n_frames, b.frame_dims()) {
        return Err(SemfiError::Shape("clip shapes differ".into()));
    }
    psnr_values(&a.data, &b.data)
}

/// Mean SSIM over every valid 7×7 window of the grayscale frames.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(SemfiError::Shape(format!("frame dims {:?} and {:?}", a.dims(), b.dims())));
    }
    let (h, w) = (a.height, a.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(SemfiError::Argument(format!(
            "frame {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let (ga, gb) = (a.grayscale(), b.grayscale());
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let cov_norm = np / (np - 1.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - SSIM_WINDOW {
        for x in 0..=w - SSIM_WINDOW {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for yy in y..y + SSIM_WINDOW {
                for xx in x..x + SSIM_WINDOW {
                    let (va, vb) = (ga[yy * w + xx], gb[yy * w + xx]);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let (ma, mb) = (sa / np, sb / np);
            let va = cov_norm * (saa / np - ma * ma);
            let vb = cov_norm * (sbb / np - mb * mb);
            let vab = cov_norm * (sab / np - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * vab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn mae(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// `1 − mean MAE` between consecutive frames.
pub fn temporal_flickering(clip: &VideoClip) -> Result<f64> {
    if clip.n_frames < 2 {
        return Err(SemfiError::Argument(format!("need N >= 2 frames, got {}", clip.n_frames)));
    }
    let pairs = clip.n_frames - 1;
    let s: f64 = (0..pairs).map(|i| mae(clip.frame_slice(i), clip.frame_slice(i + 1))).sum();
    Ok(1.0 - s / pairs as f64)
}

pub trait FrameInterpolator {
    /// The frame halfway between `a` and `b`.
    fn midpoint(&self, a: &Frame, b: &Frame) -> Result<Frame>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AverageInterpolator;

impl FrameInterpolator for AverageInterpolator {
    fn midpoint(&self, a: &Frame, b: &Frame) -> Result<Frame> {
        check_len(&a.data, &b.data)?;
        let data = a.data.iter().zip(&b.data).map(|(x, y)| 0.5 * (x + y)).collect();
        Frame::new(a.height, a.width, a.channels, data)
    }
}

/// Warps both neighbours half-way along the estimated flow and averages them.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowWarpInterpolator {
    pub estimator: PyramidFlow,
}

impl FrameInterpolator for FlowWarpInterpolator {
    fn midpoint(&self, a: &Frame, b: &Frame) -> Result<Frame> {
        check_len(&a.data, &b.data)?;
        let flow = self.estimator.flow(a, b)?;
        let (h, w, c) = a.dims();
        let mut data = vec![0.0f32; h * w * c];
        for ch in 0..c {
            let pa: Vec<f64> = (0..h * w).map(|p| f64::from(a.data[p * c + ch])).collect();
            let pb: Vec<f64> = (0..h * w).map(|p| f64::from(b.data[p * c + ch])).collect();
            for p in 0..h * w {
                let (x, y) = ((p % w) as f64, (p / w) as f64);
                let (hu, hv) = (0.5 * flow.u[p], 0.5 * flow.v[p]);
                let va = sample_bilinear(&pa, h, w, x - hu, y - hv);
                let vb = sample_bilinear(&pb, h, w, x + hu, y + hv);
                data[p * c + ch] = (0.5 * (va + vb)) as f32;
            }
        }
        Frame::new(h, w, c, data)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolatorKind {
    #[default]
    Average,
    FlowWarp,
}

impl InterpolatorKind {
    pub fn build(self) -> Box<dyn FrameInterpolator> {
        match self {
            InterpolatorKind::Average => Box::new(AverageInterpolator),
            InterpolatorKind::FlowWarp => Box::new(FlowWarpInterpolator::default()),
        }
    }
}

/// Rebuilds every odd frame that has two neighbours from those neighbours and
/// scores `1 − mean MAE` of the reconstructions.
pub fn motion_smoothness(clip: &VideoClip, interpolator: &dyn FrameInterpolator) -> Result<f64> {
    if clip.n_frames < 3 {
        return Err(SemfiError::Argument(format!("need N >= 3 frames, got {}", clip.n_frames)));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in (1..clip.n_frames - 1).step_by(2) {
        let rebuilt = interpolator.midpoint(&clip.frame(i - 1), &clip.frame(i + 1))?;
        total += mae(clip.frame_slice(i), &rebuilt.data);
        count += 1;
    }
    Ok(1.0 - total / count as f64)
}

/// Mean flow magnitude over consecutive frame pairs.
pub fn dynamic_degree(clip: &VideoClip, estimator: &dyn FlowEstimator) -> Result<f64> {
    if clip.n_frames < 2 {
        return Err(SemfiError::Argument(format!("need N >= 2 frames, got {}", clip.n_frames)));
    }
    let mut total = 0.0;
    for i in 0..clip.n_frames - 1 {
        total += flow_score(&clip.frame(i), &clip.frame(i + 1), estimator)?;
    }
    Ok(total / (clip.n_frames - 1) as f64)
}

/// Endpoint adherence of a generated clip to its conditioning frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFidelity {
    pub psnr_first: f64,
    pub psnr_last: f64,
    pub ssim_first: f64,
    pub ssim_last: f64,
    pub perceptual_first: f64,
    pub perceptual_last: f64,
}

impl FrameFidelity {
    pub fn psnr(&self) -> f64 {
        0.5 * (self.psnr_first + self.psnr_last)
    }

    pub fn ssim(&self) -> f64 {
        0.5 * (self.ssim_first + self.ssim_last)
    }

    pub fn perceptual(&self) -> f64 {
        0.5 * (self.perceptual_first + self.perceptual_last)
    }
}

pub fn frame_fidelity(generated: &VideoClip, first: &Frame, last: &Frame, embedder: &ConvEmbedder) -> Result<FrameFidelity> {
    let (g0, g1) = (generated.first(), generated.last());
    Ok(FrameFidelity {
        psnr_first: psnr(&g0, first)?,
        psnr_last: psnr(&g1, last)?,
        ssim_first: ssim(&g0, first)?,
        ssim_last: ssim(&g1, last)?,
        perceptual_first: embedder.frame_distance(&g0, first)?,
        perceptual_last: embedder.frame_distance(&g1, last)?,
    })
}

/// Aesthetic score; needs a pretrained predictor that is not bundled.
pub fn aesthetic_quality(_clip: &VideoClip) -> Result<f64> {
    Err(SemfiError::PredictorNotConfigured("aesthetic quality".into()))
}

/// Imaging-quality score; needs a pretrained predictor that is not bundled.
pub fn imaging_quality(_clip: &VideoClip) -> Result<f64> {
    Err(SemfiError::PredictorNotConfigured("imaging quality".into()))
}
