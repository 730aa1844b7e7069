//! Ancestral sampling on a respaced timestep ladder.

use rand_distr::{Distribution, StandardNormal};

use crate::conditioning::{GuidancePack, ImageEncoder};
use crate::error::{Result, SemfiError};
use crate::mol::MoLState;
use crate::nn::Real;
use crate::rng::SeedStream;
use crate::video::{Frame, VideoClip};

use super::config::PredictionTarget;
use super::denoiser::Denoiser;
use super::latent::{LatentCodec, Volume};
use super::schedule::NoiseSchedule;
use super::text::{TextEmbedding, TextEncoder};

#[derive(Debug, Clone)]
pub struct SampleRequest<'a> {
    pub first: &'a Frame,
    pub last: &'a Frame,
    pub text: &'a TextEmbedding,
    pub n_frames: usize,
    pub steps: usize,
    /// Re-impose the noised endpoints at every step and paste the exact
    /// endpoints into the decoded clip.
    pub clamp_endpoints: bool,
    pub seed: SeedStream,
    pub fps: u32,
}

fn gaussian(seed: SeedStream, len: usize) -> Vec<f32> {
    let mut rng = seed.rng();
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Generates `n_frames` frames between the two endpoints.
pub fn sample<T: Real>(
    model: &Denoiser<T>,
    mol: Option<&MoLState<T>>,
    encoder: &dyn ImageEncoder,
    schedule: &NoiseSchedule,
    req: &SampleRequest<'_>,
) -> Result<VideoClip> {
    let cfg = &model.config;
    let n = req.n_frames;
    if n < 2 {
        return Err(SemfiError::Argument(format!("need N >= 2 frames, got {n}")));
    }
    if req.first.dims() != req.last.dims() {
        return Err(SemfiError::Shape(format!(
            "endpoint frames differ: {:?} vs {:?}",
            req.first.dims(),
            req.last.dims()
        )));
    }
    if req.first.dims() != (cfg.height, cfg.width, cfg.channels) {
        return Err(SemfiError::Shape(format!(
            "endpoint frames are {:?}, model expects {}x{}x{}",
            req.first.dims(),
            cfg.height,
            cfg.width,
            cfg.channels
        )));
    }
    let codec = LatentCodec::new(cfg.latent_pool);
    let pack = GuidancePack::dual_endpoint(req.first, req.last, n, &codec, encoder)?;
    let uncond = (cfg.cfg_scale != 1.0).then(|| {
        let empty = TextEncoder::new(cfg.text_buckets, cfg.d_text, cfg.text_seed).encode("");
        (empty, pack.without_embedding())
    });
    let ends = [codec.encode_frame(req.first), codec.encode_frame(req.last)];
    let (lh, lw, lc) = cfg.latent_dims();
    let ts = schedule.respaced(req.steps)?;

    let mut x = Volume::new(n, lh, lw, lc, gaussian(req.seed.derive("init"), n * lh * lw * lc))?;
    let flen = x.frame_len();
    for i in (0..ts.len()).rev() {
        let t = ts[i];
        let (a, s) = (schedule.signal(t), schedule.noise(t));
        let (c_skip, c_out) = cfg.velocity_coefficients(a, s);
        if req.clamp_endpoints {
            let z = gaussian(req.seed.derive("clamp").index(i as u64), 2 * flen);
            for (k, pos) in [0, n - 1].into_iter().enumerate() {
                let dst = x.frame_slice_mut(pos);
                for ((d, &e), &zz) in dst.iter_mut().zip(&ends[k].data).zip(&z[k * flen..(k + 1) * flen]) {
                    *d = (a * f64::from(e) + s * f64::from(zz)) as f32;
                }
            }
        }
        let mut pred = model.forward(&x, t, schedule, req.text, &pack, mol, n)?;
        if let Some((empty, upack)) = &uncond {
            let u = model.forward(&x, t, schedule, empty, upack, mol, n)?;
            let w = cfg.cfg_scale as f32;
            for (p, &uu) in pred.data.iter_mut().zip(&u.data) {
                *p = uu + w * (*p - uu);
            }
        }
        let x0: Vec<f64> = x
            .data
            .iter()
            .zip(&pred.data)
            .map(|(&xt, &p)| {
                let (xt, p) = (f64::from(xt), f64::from(p));
                let x0 = match cfg.prediction_target {
                    PredictionTarget::Epsilon => (xt - s * p) / a,
                    PredictionTarget::Velocity => c_skip * xt - c_out * p,
                };
                if x0.is_finite() {
                    x0.clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        if i == 0 {
            for (d, v) in x.data.iter_mut().zip(&x0) {
                *d = *v as f32;
            }
            break;
        }
        let (ab_t, ab_p) = (schedule.alphas_cumprod[t], schedule.alphas_cumprod[ts[i - 1]]);
        let alpha = ab_t / ab_p;
        let beta = 1.0 - alpha;
        let c0 = ab_p.sqrt() * beta / (1.0 - ab_t);
        let ct = alpha.sqrt() * (1.0 - ab_p) / (1.0 - ab_t);
        let sd = (beta * (1.0 - ab_p) / (1.0 - ab_t)).max(0.0).sqrt();
        let z = gaussian(req.seed.derive("step").index(i as u64), x.data.len());
        for ((d, &x0v), &zz) in x.data.iter_mut().zip(&x0).zip(&z) {
            *d = (c0 * x0v + ct * f64::from(*d) + sd * f64::from(zz)) as f32;
        }
    }
    let mut clip = codec.decode(&x, req.fps, &req.text.source_text)?;
    if req.clamp_endpoints {
        let k = clip.frame_len();
        clip.data[..k].copy_from_slice(&req.first.data);
        clip.data[(n - 1) * k..].copy_from_slice(&req.last.data);
    }
    Ok(clip)
}
