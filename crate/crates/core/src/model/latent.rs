//! Latent volumes and the pixel↔latent codec.
//!
//! There is no learned autoencoder: a latent is the clip rescaled to
//! `[-1, 1]`, optionally average-pooled by an integer factor. Decoding
//! upsamples by nearest neighbour.

use crate::error::{Result, SemfiError};
use crate::nn::{Real, Tensor};
use crate::video::{Frame, VideoClip};

/// A `[N, H, W, C]` row-major volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Volume {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(SemfiError::Shape(format!(
                "volume buffer has {} values, expected {n}x{h}x{w}x{c}",
                data.len()
            )));
        }
        Ok(Volume { n, h, w, c, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn frame_slice(&self, i: usize) -> &[f32] {
        let k = self.frame_len();
        &self.data[i * k..(i + 1) * k]
    }

    pub fn frame_slice_mut(&mut self, i: usize) -> &mut [f32] {
        let k = self.frame_len();
        &mut self.data[i * k..(i + 1) * k]
    }

    /// Concatenates volumes along the channel axis.
    pub fn concat_channels(parts: &[&Volume]) -> Result<Volume> {
        let first = parts
            .first()
            .ok_or_else(|| SemfiError::Argument("nothing to concatenate".into()))?;
        let (n, h, w) = (first.n, first.h, first.w);
        for p in parts {
            if (p.n, p.h, p.w) != (n, h, w) {
                return Err(SemfiError::Shape(format!(
                    "cannot concatenate {:?} with {:?} along channels",
                    p.dims(),
                    first.dims()
                )));
            }
        }
        let c: usize = parts.iter().map(|p| p.c).sum();
        let mut data = Vec::with_capacity(n * h * w * c);
        for px in 0..n * h * w {
            for p in parts {
                data.extend_from_slice(&p.data[px * p.c..(px + 1) * p.c]);
            }
        }
        Ok(Volume { n, h, w, c, data })
    }

    /// Channels `[start, start + len)` as a new volume.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Volume> {
        if start + len > self.c {
            return Err(SemfiError::Shape(format!(
                "channel slice [{start}, {}) exceeds {} channels",
                start + len,
                self.c
            )));
        }
        let mut data = Vec::with_capacity(self.n * self.h * self.w * len);
        for px in 0..self.n * self.h * self.w {
            data.extend_from_slice(&self.data[px * self.c + start..px * self.c + start + len]);
        }
        Ok(Volume {
            n: self.n,
            h: self.h,
            w: self.w,
            c: len,
            data,
        })
    }
}

/// Maps frames to latents and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentCodec {
    pub pool: usize,
}

impl LatentCodec {
    pub fn new(pool: usize) -> Self {
        LatentCodec { pool: pool.max(1) }
    }

    pub fn encode_frame_into(&self, frame: &Frame, out: &mut [f32]) {
        let p = self.pool;
        let (h, w, c) = (frame.height / p, frame.width / p, frame.channels);
        let norm = 1.0 / (p * p) as f32;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0f32;
                    for dy in 0..p {
                        for dx in 0..p {
                            acc += frame.at(y * p + dy, x * p + dx, ch);
                        }
                    }
                    out[(y * w + x) * c + ch] = 2.0 * acc * norm - 1.0;
                }
            }
        }
    }

    pub fn encode_frame(&self, frame: &Frame) -> Volume {
        let mut v = Volume::zeros(1, frame.height / self.pool, frame.width / self.pool, frame.channels);
        self.encode_frame_into(frame, &mut v.data);
        v
    }

    pub fn encode_clip(&self, clip: &VideoClip) -> Volume {
        let (h, w, c) = (clip.height / self.pool, clip.width / self.pool, clip.channels);
        let mut v = Volume::zeros(clip.n_frames, h, w, c);
        for i in 0..clip.n_frames {
            let f = clip.frame(i);
            self.encode_frame_into(&f, v.frame_slice_mut(i));
        }
        v
    }

    /// Decodes to a clip, clamping to `[0, 1]` and replacing non-finite values with 0.
    pub fn decode(&self, latent: &Volume, fps: u32, caption: &str) -> Result<VideoClip> {
        let p = self.pool;
        let (h, w, c) = (latent.h * p, latent.w * p, latent.c);
        let mut data = vec![0.0f32; latent.n * h * w * c];
        for i in 0..latent.n {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        let v = latent.data[((i * latent.h + y / p) * latent.w + x / p) * c + ch];
                        let v = if v.is_finite() { (v + 1.0) * 0.5 } else { 0.0 };
                        data[((i * h + y) * w + x) * c + ch] = v.clamp(0.0, 1.0);
                    }
                }
            }
        }
        VideoClip::new(latent.n, h, w, c, data, fps, caption)
    }
}

/// Patch grid of a volume: counts along (frames, rows, cols).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch: [usize; 3],
    pub counts: [usize; 3],
    pub channels: usize,
}

impl PatchGrid {
    pub fn new(dims: [usize; 4], patch: [usize; 3]) -> Result<Self> {
        let axes = ["frames (N)", "height (H)", "width (W)"];
        let mut counts = [0; 3];
        for a in 0..3 {
            if patch[a] == 0 || dims[a] % patch[a] != 0 {
                return Err(SemfiError::Config(format!(
                    "patch size {} does not divide {} = {}",
                    patch[a], axes[a], dims[a]
                )));
            }
            counts[a] = dims[a] / patch[a];
        }
        Ok(PatchGrid {
            patch,
            counts,
            channels: dims[3],
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.counts.iter().product()
    }

    /// Tokens per frame-slab; spatial attention groups have this size.
    pub fn spatial_tokens(&self) -> usize {
        self.counts[1] * self.counts[2]
    }

    pub fn patch_dim(&self) -> usize {
        self.patch.iter().product::<usize>() * self.channels
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [pt, ph, pw] = self.patch;
        let [nt, nh, nw] = self.counts;
        let c = self.channels;
        let (h, w) = (nh * ph, nw * pw);
        for bt in 0..nt {
            for by in 0..nh {
                for bx in 0..nw {
                    let token = (bt * nh + by) * nw + bx;
                    let mut k = 0;
                    for dt in 0..pt {
                        for dy in 0..ph {
                            for dx in 0..pw {
                                let (t, y, x) = (bt * pt + dt, by * ph + dy, bx * pw + dx);
                                let base = ((t * h + y) * w + x) * c;
                                for ch in 0..c {
                                    f(token, k, base + ch);
                                    k += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Rearranges a volume into `[L, pt·ph·pw·C]` patch rows, `L = (N/pt)(H/ph)(W/pw)`.
pub fn patchify<T: Real>(vol: &Volume, patch: [usize; 3]) -> Result<Tensor<T>> {
    let grid = PatchGrid::new(vol.dims(), patch)?;
    let d = grid.patch_dim();
    let mut out = Tensor::zeros(grid.num_tokens(), d);
    grid.for_each(|token, k, idx| out.data[token * d + k] = T::of(f64::from(vol.data[idx])));
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Real>(tokens: &Tensor<T>, dims: [usize; 4], patch: [usize; 3]) -> Result<Volume> {
    let grid = PatchGrid::new(dims, patch)?;
    let d = grid.patch_dim();
    if tokens.shape() != (grid.num_tokens(), d) {
        return Err(SemfiError::Shape(format!(
            "token matrix {:?} does not match grid {}x{d}",
            tokens.shape(),
            grid.num_tokens()
        )));
    }
    let mut vol = Volume::zeros(dims[0], dims[1], dims[2], dims[3]);
    grid.for_each(|token, k, idx| {
        vol.data[idx] = tokens.data[token * d + k].to_f32().unwrap_or(f32::NAN);
    });
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, h: usize, w: usize, c: usize) -> Volume {
        let data = (0..n * h * w * c).map(|i| (i % 97) as f32 / 97.0).collect();
        Volume::new(n, h, w, c, data).unwrap()
    }

    #[test]
    fn token_counts() {
        let g = PatchGrid::new([4, 8, 8, 8], [1, 4, 4]).unwrap();
        assert_eq!(g.num_tokens(), 16);
        let g = PatchGrid::new([8, 16, 16, 3], [2, 4, 4]).unwrap();
        assert_eq!(g.num_tokens(), 64);
    }

    #[test]
    fn patch_round_trip_is_exact() {
        let v = ramp(4, 8, 8, 8);
        let t = patchify::<f32>(&v, [1, 4, 4]).unwrap();
        assert_eq!(t.shape(), (16, 128));
        let back = unpatchify(&t, v.dims(), [1, 4, 4]).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn mismatched_patch_names_axis() {
        let err = PatchGrid::new([5, 8, 8, 3], [2, 4, 4]).unwrap_err();
        assert!(err.to_string().contains("frames"), "{err}");
        let err = PatchGrid::new([4, 8, 6, 3], [1, 4, 4]).unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn codec_round_trip_in_pixel_mode() {
        let data: Vec<f32> = (0..2 * 4 * 4 * 3).map(|i| (i % 5) as f32 / 4.0).collect();
        let clip = VideoClip::new(2, 4, 4, 3, data, 24, "").unwrap();
        let codec = LatentCodec::new(1);
        let back = codec.decode(&codec.encode_clip(&clip), 24, "").unwrap();
        for (a, b) in clip.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn pooled_codec_inverts_on_block_constant_frames() {
        let mut data = vec![0.0f32; 4 * 4];
        for y in 0..4 {
            for x in 0..4 {
                data[y * 4 + x] = if (y / 2 + x / 2) % 2 == 0 { 0.25 } else { 0.75 };
            }
        }
        let mut both = data.clone();
        both.extend_from_slice(&data);
        let clip = VideoClip::new(2, 4, 4, 1, both, 24, "").unwrap();
        let codec = LatentCodec::new(2);
        let lat = codec.encode_clip(&clip);
        assert_eq!(lat.dims(), [2, 2, 2, 1]);
        assert_eq!(codec.decode(&lat, 24, "").unwrap().data, clip.data);
    }

    #[test]
    fn channel_concat_then_slice_recovers_parts() {
        let a = ramp(2, 2, 2, 3);
        let b = Volume::new(2, 2, 2, 1, vec![1.0; 8]).unwrap();
        let cat = Volume::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.c, 4);
        assert_eq!(cat.slice_channels(0, 3).unwrap(), a);
        assert_eq!(cat.slice_channels(3, 1).unwrap(), b);
    }
}
