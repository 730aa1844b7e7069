//! Seeded random convolutional features: a perceptual distance and a
//! Fréchet distance between frame sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SemfiError};
use crate::rng::SeedStream;
use crate::video::{Frame, VideoClip};

/// Fixed random 3×3 filters applied at several dyadic scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEmbedder {
    pub seed: u64,
    pub filters: usize,
    pub scales: usize,
}

impl Default for ConvEmbedder {
    fn default() -> Self {
        ConvEmbedder {
            seed: 1234,
            filters: 8,
            scales: 3,
        }
    }
}

struct FeatureMap {
    h: usize,
    w: usize,
    k: usize,
    data: Vec<f64>,
}

impl ConvEmbedder {
    fn weights(&self, scale: usize, channels: usize) -> Vec<f64> {
        let fan_in = 9 * channels;
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let mut rng = SeedStream::new(self.seed)
            .derive("conv")
            .index((scale * 16 + channels) as u64)
            .rng();
        (0..self.filters * fan_in).map(|_| dist.sample(&mut rng)).collect()
    }

    fn maps(&self, frame: &Frame) -> Vec<FeatureMap> {
        let c = frame.channels;
        let mut out = Vec::with_capacity(self.scales);
        for s in 0..self.scales {
            let (h, w) = ((frame.height >> s).max(1), (frame.width >> s).max(1));
            let planes: Vec<Vec<f64>> = (0..c)
                .map(|ch| {
                    let plane: Vec<f64> = (0..frame.height * frame.width)
                        .map(|p| 2.0 * f64::from(frame.data[p * c + ch]) - 1.0)
                        .collect();
                    Frame::resample_plane(&plane, frame.height, frame.width, h, w)
                })
                .collect();
            let wts = self.weights(s, c);
            let k = self.filters;
            let mut data = vec![0.0; h * w * k];
            for y in 0..h {
                for x in 0..w {
                    for f in 0..k {
                        let mut acc = 0.0;
                        for (ch, plane) in planes.iter().enumerate() {
                            for dy in 0..3 {
                                for dx in 0..3 {
                                    let (yy, xx) = (y as isize + dy as isize - 1, x as isize + dx as isize - 1);
                                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                        continue;
                                    }
                                    acc += wts[((f * c + ch) * 3 + dy) * 3 + dx] * plane[yy as usize * w + xx as usize];
                                }
                            }
                        }
                        data[(y * w + x) * k + f] = acc.tanh();
                    }
                }
            }
            out.push(FeatureMap { h, w, k, data });
        }
        out
    }

    /// Mean squared distance between channel-normalised feature maps, averaged over scales.
    pub fn frame_distance(&self, a: &Frame, b: &Frame) -> Result<f64> {
        if a.dims() != b.dims() {
            return Err(SemfiError::Shape(format!("frame dims {:?} and {:?}", a.dims(), b.dims())));
        }
        let (ma, mb) = (self.maps(a), self.maps(b));
        let mut total = 0.0;
        for (fa, fb) in ma.iter().zip(&mb) {
            let mut acc = 0.0;
            for p in 0..fa.h * fa.w {
                let va = &fa.data[p * fa.k..(p + 1) * fa.k];
                let vb = &fb.data[p * fb.k..(p + 1) * fb.k];
                let na = va.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
                let nb = vb.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
                acc += va.iter().zip(vb).map(|(x, y)| (x / na - y / nb).powi(2)).sum::<f64>();
            }
            total += acc / (fa.h * fa.w) as f64;
        }
        Ok(total / ma.len() as f64)
    }

    /// Spatially pooled activations, one vector per frame.
    pub fn frame_features(&self, frame: &Frame) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scales * self.filters);
        for m in self.maps(frame) {
            let n = (m.h * m.w) as f64;
            for f in 0..m.k {
                out.push((0..m.h * m.w).map(|p| m.data[p * m.k + f]).sum::<f64>() / n);
            }
        }
        out
    }
}

/// Mean per-frame perceptual distance between two equally long clips.
pub fn perceptual_distance(a: &VideoClip, b: &VideoClip, embedder: &ConvEmbedder) -> Result<f64> {
    if a.n_frames != b.n_frames {
        return Err(SemfiError::Pairing(format!("clips have {} and {} frames", a.n_frames, b.n_frames)));
    }
    let mut total = 0.0;
    for i in 0..a.n_frames {
        total += embedder.frame_distance(&a.frame(i), &b.frame(i))?;
    }
    Ok(total / a.n_frames as f64)
}

fn moments(set: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if set.len() < 2 {
        return Err(SemfiError::Statistics(format!("need at least 2 samples, got {}", set.len())));
    }
    let d = set[0].len();
    if set.iter().any(|v| v.len() != d) {
        return Err(SemfiError::Statistics("feature vectors differ in length".into()));
    }
    let n = set.len() as f64;
    let mut mu = DVector::zeros(d);
    for v in set {
        mu += DVector::from_column_slice(v);
    }
    mu /= n;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let c = DVector::from_column_slice(v) - &mu;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    Ok((mu, cov))
}

fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    let scale = m.norm().max(1e-300);
    (m - m.transpose()).norm() / scale
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets.
///
/// The cross term uses `tr((Σ1 Σ2)^½) = tr((Σ1^½ Σ2 Σ1^½)^½)`, which keeps every
/// square root on a symmetric positive semi-definite matrix.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu1, s1) = moments(a)?;
    let (mu2, s2) = moments(b)?;
    if mu1.len() != mu2.len() {
        return Err(SemfiError::Statistics("feature sets differ in dimension".into()));
    }
    let r1 = psd_sqrt(&s1);
    let m = &r1 * &s2 * &r1;
    let resid = symmetry_residual(&m);
    if resid > 1e-8 {
        return Err(SemfiError::Statistics(format!("symmetry residual {resid:e} exceeds 1e-8")));
    }
    let m = (&m + m.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d = (&mu1 - &mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Fréchet distance over per-frame embedder features of two frame sets.
pub fn frechet_feature_distance(generated: &[Frame], reference: &[Frame], embedder: &ConvEmbedder) -> Result<f64> {
    let fa: Vec<Vec<f64>> = generated.iter().map(|f| embedder.frame_features(f)).collect();
    let fb: Vec<Vec<f64>> = reference.iter().map(|f| embedder.frame_features(f)).collect();
    frechet_distance(&fa, &fb)
}
