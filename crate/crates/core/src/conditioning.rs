//! Dual-endpoint conditioning: guidance frames, frame mask, summed image embedding.

use crate::error::{Result, SemfiError};
use crate::model::latent::{LatentCodec, Volume};
use crate::rng::SeedStream;
use crate::video::Frame;
use rand_distr::{Distribution, StandardNormal};

/// Everything the denoiser is conditioned on besides text and timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidancePack {
    /// `[N, h, w, C']`; encoded endpoints at preserved positions, zeros elsewhere.
    pub guidance_frames: Volume,
    /// One entry per frame: 1 preserved, 0 generated.
    pub mask: Vec<u8>,
    pub cond_embedding: Vec<f32>,
}

impl GuidancePack {
    /// Endpoint conditioning for an `n`-frame target.
    pub fn dual_endpoint(
        first: &Frame,
        last: &Frame,
        n: usize,
        codec: &LatentCodec,
        encoder: &dyn ImageEncoder,
    ) -> Result<Self> {
        Ok(GuidancePack {
            guidance_frames: build_guidance_frames(first, last, n, codec)?,
            mask: build_mask(n)?,
            cond_embedding: condition_embedding(first, last, encoder)?,
        })
    }

    /// Image-to-video conditioning on the first frame alone, used to pretrain the base model.
    pub fn first_frame_only(first: &Frame, n: usize, codec: &LatentCodec, encoder: &dyn ImageEncoder) -> Result<Self> {
        if n < 2 {
            return Err(SemfiError::Argument(format!("need N >= 2 frames, got {n}")));
        }
        let enc = codec.encode_frame(first);
        let mut guidance_frames = Volume::zeros(n, enc.h, enc.w, enc.c);
        guidance_frames.frame_slice_mut(0).copy_from_slice(&enc.data);
        let mut mask = vec![0u8; n];
        mask[0] = 1;
        Ok(GuidancePack {
            guidance_frames,
            mask,
            cond_embedding: encoder.encode(first)?,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.mask.len()
    }

    /// Same frames and mask with the image embedding zeroed, for the unconditional branch of guidance.
    pub fn without_embedding(&self) -> Self {
        GuidancePack {
            cond_embedding: vec![0.0; self.cond_embedding.len()],
            ..self.clone()
        }
    }

    /// Checks that non-preserved positions carry no guidance.
    pub fn validate(&self) -> Result<()> {
        if self.guidance_frames.n != self.mask.len() {
            return Err(SemfiError::Shape(format!(
                "guidance has {} frames but mask has {}",
                self.guidance_frames.n,
                self.mask.len()
            )));
        }
        for (i, &m) in self.mask.iter().enumerate() {
            if m == 0 && self.guidance_frames.frame_slice(i).iter().any(|&v| v != 0.0) {
                return Err(SemfiError::Shape(format!("masked-out guidance frame {i} is not zero")));
            }
        }
        Ok(())
    }
}

/// Guidance tensor: encoded `first` at position 0, encoded `last` at `n - 1`, exact zeros between.
pub fn build_guidance_frames(first: &Frame, last: &Frame, n: usize, codec: &LatentCodec) -> Result<Volume> {
    if n < 2 {
        return Err(SemfiError::Argument(format!("need N >= 2 frames, got {n}")));
    }
    if first.dims() != last.dims() {
        return Err(SemfiError::Shape(format!(
            "endpoint frames differ in shape: {:?} vs {:?}",
            first.dims(),
            last.dims()
        )));
    }
    let f = codec.encode_frame(first);
    let l = codec.encode_frame(last);
    let mut out = Volume::zeros(n, f.h, f.w, f.c);
    out.frame_slice_mut(0).copy_from_slice(&f.data);
    out.frame_slice_mut(n - 1).copy_from_slice(&l.data);
    Ok(out)
}

/// `[1, 0, …, 0, 1]` of length `n`.
pub fn build_mask(n: usize) -> Result<Vec<u8>> {
    if n < 2 {
        return Err(SemfiError::Argument(format!("need N >= 2 frames, got {n}")));
    }
    let mut m = vec![0u8; n];
    m[0] = 1;
    m[n - 1] = 1;
    Ok(m)
}

/// Image feature extractor feeding the condition embedding.
pub trait ImageEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, frame: &Frame) -> Result<Vec<f32>>;
}

/// Frozen seeded projection of an 8×8 grayscale thumbnail.
#[derive(Debug, Clone)]
pub struct RandomProjectionEncoder {
    dim: usize,
    weights: Vec<f32>,
}

const THUMB: usize = 8;

impl RandomProjectionEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = SeedStream::new(seed).derive("image-encoder").rng();
        let k = 1.0 / (THUMB * THUMB) as f32;
        let weights = (0..dim * THUMB * THUMB)
            .map(|_| {
                let z: f32 = StandardNormal.sample(&mut rng);
                z * k.sqrt()
            })
            .collect();
        RandomProjectionEncoder { dim, weights }
    }
}

impl ImageEncoder for RandomProjectionEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, frame: &Frame) -> Result<Vec<f32>> {
        if frame.height == 0 || frame.width == 0 {
            return Err(SemfiError::Encoder("empty frame".into()));
        }
        let thumb = Frame::resample_plane(&frame.grayscale(), frame.height, frame.width, THUMB, THUMB);
        Ok(self
            .weights
            .chunks(THUMB * THUMB)
            .map(|w| w.iter().zip(&thumb).map(|(&a, &b)| f64::from(a) * b).sum::<f64>() as f32)
            .collect())
    }
}

/// Encoder that always returns zeros.
#[derive(Debug, Clone, Copy)]
pub struct ZeroEncoder(pub usize);

impl ImageEncoder for ZeroEncoder {
    fn dim(&self) -> usize {
        self.0
    }

    fn encode(&self, _frame: &Frame) -> Result<Vec<f32>> {
        Ok(vec![0.0; self.0])
    }
}

/// `enc(first) + enc(last)`, taken before any projection.
pub fn condition_embedding(first: &Frame, last: &Frame, encoder: &dyn ImageEncoder) -> Result<Vec<f32>> {
    let a = encoder.encode(first)?;
    let b = encoder.encode(last)?;
    if a.len() != b.len() {
        return Err(SemfiError::Encoder(format!(
            "encoder returned {} and {} dims",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// Channel concatenation `[noisy | guidance | mask]`, the mask broadcast to one channel per frame.
pub fn assemble_model_input(noisy: &Volume, pack: &GuidancePack) -> Result<Volume> {
    let g = &pack.guidance_frames;
    if noisy.n != pack.mask.len() || noisy.n != g.n {
        return Err(SemfiError::Shape(format!(
            "latent has N = {} but guidance has N = {} and mask {}",
            noisy.n,
            g.n,
            pack.mask.len()
        )));
    }
    if (noisy.h, noisy.w) != (g.h, g.w) {
        return Err(SemfiError::Shape(format!(
            "latent is {}x{} but guidance is {}x{}",
            noisy.h, noisy.w, g.h, g.w
        )));
    }
    let mut mask = Volume::zeros(noisy.n, noisy.h, noisy.w, 1);
    for (i, &m) in pack.mask.iter().enumerate() {
        mask.frame_slice_mut(i).fill(f32::from(m));
    }
    Volume::concat_channels(&[noisy, g, &mask])
}

/// Splits an assembled input back into `(noisy, guidance, per-frame mask)`.
pub fn split_model_input(input: &Volume, noisy_channels: usize) -> Result<(Volume, Volume, Vec<u8>)> {
    if input.c < noisy_channels + 1 {
        return Err(SemfiError::Shape("assembled input too narrow".into()));
    }
    let guide_channels = input.c - noisy_channels - 1;
    let noisy = input.slice_channels(0, noisy_channels)?;
    let guide = input.slice_channels(noisy_channels, guide_channels)?;
    let mask_vol = input.slice_channels(input.c - 1, 1)?;
    let mask = (0..input.n).map(|i| mask_vol.frame_slice(i)[0] as u8).collect();
    Ok((noisy, guide, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: f32) -> Frame {
        Frame::filled(8, 8, 3, v)
    }

    fn checker(seed: usize) -> Frame {
        let data = (0..8 * 8 * 3).map(|i| ((i * 7 + seed * 13) % 11) as f32 / 10.0).collect();
        Frame::new(8, 8, 3, data).unwrap()
    }

    #[test]
    fn mask_examples() {
        assert_eq!(build_mask(9).unwrap(), vec![1, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(build_mask(2).unwrap(), vec![1, 1]);
        assert_eq!(build_mask(81).unwrap().iter().map(|&v| v as usize).sum::<usize>(), 2);
        assert!(build_mask(1).is_err());
    }

    #[test]
    fn guidance_positions() {
        let codec = LatentCodec::new(1);
        let (a, b) = (checker(1), checker(2));
        let g = build_guidance_frames(&a, &b, 2, &codec).unwrap();
        assert_eq!(g.frame_slice(0), codec.encode_frame(&a).data.as_slice());
        assert_eq!(g.frame_slice(1), codec.encode_frame(&b).data.as_slice());

        let g = build_guidance_frames(&a, &b, 9, &codec).unwrap();
        let mid: f32 = (1..8).flat_map(|i| g.frame_slice(i).iter().map(|v| v.abs())).sum();
        assert_eq!(mid, 0.0);

        let g = build_guidance_frames(&a, &a, 5, &codec).unwrap();
        assert_eq!(g.frame_slice(0), g.frame_slice(4));
        assert!(build_guidance_frames(&a, &b, 1, &codec).is_err());
    }

    #[test]
    fn embedding_sums_and_commutes() {
        let enc = RandomProjectionEncoder::new(16, 3);
        let (a, b) = (checker(1), checker(5));
        let e = condition_embedding(&a, &a, &enc).unwrap();
        let single = enc.encode(&a).unwrap();
        for (x, y) in e.iter().zip(&single) {
            assert_eq!(*x, 2.0 * y);
        }
        assert_eq!(
            condition_embedding(&a, &b, &enc).unwrap(),
            condition_embedding(&b, &a, &enc).unwrap()
        );
        assert_eq!(condition_embedding(&a, &b, &ZeroEncoder(16)).unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn assembly_channels_and_round_trip() {
        let codec = LatentCodec::new(1);
        let enc = ZeroEncoder(4);
        let pack = GuidancePack::dual_endpoint(&frame(0.9), &frame(0.2), 5, &codec, &enc).unwrap();
        pack.validate().unwrap();
        let noisy = Volume::zeros(5, 8, 8, 3);
        let input = assemble_model_input(&noisy, &pack).unwrap();
        assert_eq!(input.c, 3 + 3 + 1);
        let (n2, g2, m2) = split_model_input(&input, 3).unwrap();
        assert_eq!(n2, noisy);
        assert_eq!(g2, pack.guidance_frames);
        assert_eq!(m2, pack.mask);

        // zero latent: only guidance and mask channels carry signal
        let sums: Vec<f32> = (0..7)
            .map(|c| input.data.iter().skip(c).step_by(7).map(|v| v.abs()).sum())
            .collect();
        assert!(sums[..3].iter().all(|&s| s == 0.0));
        assert!(sums[3..].iter().all(|&s| s > 0.0));

        let wrong = Volume::zeros(4, 8, 8, 3);
        assert!(matches!(assemble_model_input(&wrong, &pack), Err(SemfiError::Shape(_))));
    }

    #[test]
    fn first_frame_pack_masks_one_position() {
        let codec = LatentCodec::new(1);
        let pack = GuidancePack::first_frame_only(&frame(0.5), 4, &codec, &ZeroEncoder(2)).unwrap();
        pack.validate().unwrap();
        assert_eq!(pack.mask, vec![1, 0, 0, 0]);
    }
}
