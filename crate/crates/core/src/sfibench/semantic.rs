//! Toy joint video/text embedding: hand-built colour, shape, and motion
//! features mapped onto a caption bag-of-words by a ridge probe.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::scores::cosine;
use crate::data::synth::{synth_generate, SynthConfig, PALETTE};
use crate::error::{Result, SemfiError};
use crate::model::text::tokenize;
use crate::rng::SeedStream;
use crate::video::VideoClip;

pub const VOCAB: [&str; 27] = [
    "red", "green", "blue", "yellow", "white", "cyan", "magenta", "orange", "circle", "square", "triangle", "moves",
    "right", "left", "up", "down", "circles", "clockwise", "counterclockwise", "enters", "exits", "from", "to",
    "top", "bottom", "stays", "still",
];

const PER_COLOUR: usize = 8;
const MATCH_TOLERANCE: f32 = 0.2;

pub fn feature_dim() -> usize {
    PALETTE.len() * PER_COLOUR + 1
}

fn palette_value(rgb: [u8; 3], channels: usize) -> [f32; 3] {
    let f = rgb.map(|v| f32::from(v) / 255.0);
    if channels >= 3 {
        f
    } else {
        let l = 0.299 * f[0] + 0.587 * f[1] + 0.114 * f[2];
        [l, l, l]
    }
}

/// Colour-keyed shape and motion statistics, plus a constant bias term.
pub fn video_features(clip: &VideoClip) -> Vec<f64> {
    let (h, w, c) = clip.frame_dims();
    let px = h * w;
    let mut out = Vec::with_capacity(feature_dim());
    for (_, rgb) in PALETTE {
        let target = palette_value(rgb, c);
        let mut presence = Vec::with_capacity(clip.n_frames);
        let mut centroids: Vec<Option<(f64, f64)>> = Vec::with_capacity(clip.n_frames);
        let mut fills = Vec::new();
        for i in 0..clip.n_frames {
            let f = clip.frame_slice(i);
            let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
            let (mut x0, mut x1, mut y0, mut y1) = (w, 0, h, 0);
            for p in 0..px {
                let hit = (0..c.min(3)).all(|ch| (f[p * c + ch] - target[ch]).abs() <= MATCH_TOLERANCE);
                if hit {
                    let (x, y) = (p % w, p / w);
                    n += 1;
                    sx += x as f64;
                    sy += y as f64;
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
            presence.push(n as f64 / px as f64);
            centroids.push((n > 0).then(|| (sx / n as f64 / w as f64, sy / n as f64 / h as f64)));
            if n >= 4 {
                fills.push(n as f64 / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64);
            }
        }
        let mean_presence = presence.iter().sum::<f64>() / presence.len() as f64;
        let seen: Vec<(f64, f64)> = centroids.iter().flatten().copied().collect();
        let (dx, dy, path) = match (seen.first(), seen.last()) {
            (Some(a), Some(b)) => {
                let path: f64 = seen.windows(2).map(|p| (p[1].0 - p[0].0).hypot(p[1].1 - p[0].1)).sum();
                (b.0 - a.0, b.1 - a.1, path)
            }
            _ => (0.0, 0.0, 0.0),
        };
        let fill = if fills.is_empty() {
            0.0
        } else {
            fills.iter().sum::<f64>() / fills.len() as f64
        };
        let present = if mean_presence > 0.002 { 1.0 } else { 0.0 };
        out.extend_from_slice(&[
            present,
            10.0 * mean_presence,
            dx,
            dy,
            fill,
            fill * fill,
            presence[0] - presence[presence.len() - 1],
            path - dx.hypot(dy),
        ]);
    }
    out.push(1.0);
    out
}

/// Normalised counts of vocabulary words.
pub fn text_features(text: &str) -> Result<Vec<f64>> {
    let mut v = vec![0.0; VOCAB.len()];
    for tok in tokenize(text) {
        if let Some(i) = VOCAB.iter().position(|w| *w == tok) {
            v[i] += 1.0;
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(SemfiError::DegenerateFeature(format!("no vocabulary words in {text:?}")));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticProbe {
    /// `[vocab, feature_dim]`, row-major.
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl SemanticProbe {
    /// Ridge regression from video features to caption bag-of-words.
    pub fn fit(clips: &[(VideoClip, String)], lambda: f64) -> Result<Self> {
        if clips.is_empty() {
            return Err(SemfiError::InsufficientData("no clips to fit the semantic probe".into()));
        }
        let d = feature_dim();
        let v = VOCAB.len();
        let mut x = DMatrix::zeros(clips.len(), d);
        let mut y = DMatrix::zeros(clips.len(), v);
        for (i, (clip, text)) in clips.iter().enumerate() {
            x.row_mut(i).copy_from_slice(&video_features(clip));
            y.row_mut(i).copy_from_slice(&text_features(text)?);
        }
        let gram = x.transpose() * &x + DMatrix::identity(d, d) * lambda;
        let rhs = x.transpose() * y;
        let chol = gram
            .cholesky()
            .ok_or_else(|| SemfiError::Statistics("ridge system is not positive definite".into()))?;
        let wt = chol.solve(&rhs);
        // Column-major `[d, v]` storage is exactly row-major `[v, d]`.
        let weights = wt.as_slice().to_vec();
        Ok(SemanticProbe { weights, lambda })
    }

    /// Fits on a seeded synthetic corpus of short clips.
    pub fn fit_synthetic(seed: SeedStream, videos: usize, frames: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        let cfg = SynthConfig {
            num_videos: videos,
            height: h,
            width: w,
            channels: c,
            fps_choices: vec![24],
            min_frames: frames,
            max_frames: frames,
            ..SynthConfig::default()
        };
        let clips = synth_generate(&cfg, seed.derive("semantic-probe"))?
            .map(|v| v.map(|v| (v.clip.clone(), v.clip.caption)))
            .collect::<Result<Vec<_>>>()?;
        Self::fit(&clips, 1e-2)
    }

    pub fn embed_video(&self, clip: &VideoClip) -> Vec<f64> {
        let f = video_features(clip);
        let d = feature_dim();
        (0..VOCAB.len())
            .map(|k| self.weights[k * d..(k + 1) * d].iter().zip(f.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Cosine similarity between the clip and the text in the probe's joint space.
pub fn semantic_fidelity(clip: &VideoClip, text: &str, probe: &SemanticProbe) -> Result<f64> {
    cosine(&probe.embed_video(clip), &text_features(text)?)
}
