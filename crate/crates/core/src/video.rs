//! Frames and clips: the pixel containers every other module trades in.

use crate::error::{Result, SemfiError};

/// A single image, `[H, W, C]` row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(SemfiError::Shape(format!(
                "frame buffer has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Frame {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Frame {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Luma for RGB (BT.601 weights), identity for single-channel frames.
    pub fn grayscale(&self) -> Vec<f64> {
        let px = self.height * self.width;
        let mut out = Vec::with_capacity(px);
        for p in 0..px {
            let s = &self.data[p * self.channels..(p + 1) * self.channels];
            let v = if self.channels >= 3 {
                0.299 * f64::from(s[0]) + 0.587 * f64::from(s[1]) + 0.114 * f64::from(s[2])
            } else {
                s.iter().map(|&v| f64::from(v)).sum::<f64>() / self.channels as f64
            };
            out.push(v);
        }
        out
    }

    /// Area-average resample of a single-channel plane to `(oh, ow)`.
    pub fn resample_plane(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let mut out = vec![0.0; oh * ow];
        for oy in 0..oh {
            let y0 = oy as f64 * h as f64 / oh as f64;
            let y1 = (oy + 1) as f64 * h as f64 / oh as f64;
            for ox in 0..ow {
                let x0 = ox as f64 * w as f64 / ow as f64;
                let x1 = (ox + 1) as f64 * w as f64 / ow as f64;
                let mut acc = 0.0;
                let mut area = 0.0;
                let mut y = y0.floor() as usize;
                while (y as f64) < y1 && y < h {
                    let wy = (y1.min((y + 1) as f64) - y0.max(y as f64)).max(0.0);
                    let mut x = x0.floor() as usize;
                    while (x as f64) < x1 && x < w {
                        let wx = (x1.min((x + 1) as f64) - x0.max(x as f64)).max(0.0);
                        acc += plane[y * w + x] * wx * wy;
                        area += wx * wy;
                        x += 1;
                    }
                    y += 1;
                }
                out[oy * ow + ox] = if area > 0.0 { acc / area } else { 0.0 };
            }
        }
        out
    }

    /// Area-average resize of all channels.
    pub fn resized(&self, oh: usize, ow: usize) -> Frame {
        if oh == self.height && ow == self.width {
            return self.clone();
        }
        let mut out = vec![0.0f32; oh * ow * self.channels];
        for c in 0..self.channels {
            let plane: Vec<f64> = (0..self.height * self.width)
                .map(|p| f64::from(self.data[p * self.channels + c]))
                .collect();
            let r = Frame::resample_plane(&plane, self.height, self.width, oh, ow);
            for (p, v) in r.into_iter().enumerate() {
                out[p * self.channels + c] = v as f32;
            }
        }
        Frame {
            height: oh,
            width: ow,
            channels: self.channels,
            data: out,
        }
    }

    pub fn from_image(img: &image::DynamicImage, channels: usize) -> Result<Frame> {
        match channels {
            1 => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                let data = g.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
                Frame::new(h as usize, w as usize, 1, data)
            }
            3 => {
                let rgb = img.to_rgb8();
                let (w, h) = rgb.dimensions();
                let data = rgb.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
                Frame::new(h as usize, w as usize, 3, data)
            }
            c => Err(SemfiError::Argument(format!(
                "images can only be loaded with 1 or 3 channels, not {c}"
            ))),
        }
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px = if self.channels >= 3 {
                    [self.at(y, x, 0), self.at(y, x, 1), self.at(y, x, 2)]
                } else {
                    let v = self.at(y, x, 0);
                    [v, v, v]
                };
                let px = px.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        img
    }
}

/// A frame sequence `[N, H, W, C]` with its frame rate and caption.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub fps: u32,
    pub caption: String,
}

impl VideoClip {
    /// Builds a clip, checking the buffer size, `N >= 2`, `fps > 0`, and that
    /// every value is finite and inside `[0, 1]`.
    pub fn new(
        n_frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        fps: u32,
        caption: impl Into<String>,
    ) -> Result<Self> {
        if n_frames < 2 {
            return Err(SemfiError::Argument(format!(
                "a clip needs at least 2 frames, got {n_frames}"
            )));
        }
        if fps == 0 {
            return Err(SemfiError::Argument("fps must be positive".into()));
        }
        if data.len() != n_frames * height * width * channels {
            return Err(SemfiError::Shape(format!(
                "clip buffer has {} values, expected {n_frames}x{height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(SemfiError::Argument(format!(
                "clip value {} at index {bad} is outside [0, 1]",
                data[bad]
            )));
        }
        Ok(VideoClip {
            n_frames,
            height,
            width,
            channels,
            data,
            fps,
            caption: caption.into(),
        })
    }

    pub fn from_frames(frames: &[Frame], fps: u32, caption: impl Into<String>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| SemfiError::Argument("no frames".into()))?;
        let dims = first.dims();
        let mut data = Vec::with_capacity(frames.len() * first.data.len());
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != dims {
                return Err(SemfiError::Shape(format!(
                    "frame {i} has dims {:?}, expected {dims:?}",
                    f.dims()
                )));
            }
            data.extend_from_slice(&f.data);
        }
        VideoClip::new(frames.len(), dims.0, dims.1, dims.2, data, fps, caption)
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame_dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn frame_slice(&self, i: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame(&self, i: usize) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.frame_slice(i).to_vec(),
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.n_frames).map(move |i| self.frame(i))
    }

    pub fn first(&self) -> Frame {
        self.frame(0)
    }

    pub fn last(&self) -> Frame {
        self.frame(self.n_frames - 1)
    }

    /// Frames `[start, start + len)` as a new clip with the same fps and caption.
    pub fn sub_clip(&self, start: usize, len: usize) -> Result<VideoClip> {
        if start + len > self.n_frames {
            return Err(SemfiError::Argument(format!(
                "sub-clip [{start}, {}) exceeds {} frames",
                start + len,
                self.n_frames
            )));
        }
        let n = self.frame_len();
        VideoClip::new(
            len,
            self.height,
            self.width,
            self.channels,
            self.data[start * n..(start + len) * n].to_vec(),
            self.fps,
            self.caption.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_rejects_out_of_range_values() {
        let err = VideoClip::new(2, 1, 1, 1, vec![0.0, 1.5], 24, "").unwrap_err();
        assert!(matches!(err, SemfiError::Argument(_)));
        assert!(VideoClip::new(1, 1, 1, 1, vec![0.0], 24, "").is_err());
        assert!(VideoClip::new(2, 1, 1, 1, vec![0.0, f32::NAN], 24, "").is_err());
    }

    #[test]
    fn sub_clip_copies_exact_frames() {
        let data: Vec<f32> = (0..5).map(|i| i as f32 / 10.0).collect();
        let clip = VideoClip::new(5, 1, 1, 1, data, 24, "x").unwrap();
        let sub = clip.sub_clip(1, 3).unwrap();
        assert_eq!(sub.data, vec![0.1, 0.2, 0.3]);
        assert!(clip.sub_clip(3, 3).is_err());
    }

    #[test]
    fn area_resize_preserves_mean() {
        let data: Vec<f32> = (0..16).map(|i| i as f32 / 16.0).collect();
        let f = Frame::new(4, 4, 1, data.clone()).unwrap();
        let r = f.resized(2, 2);
        let m0: f32 = data.iter().sum::<f32>() / 16.0;
        let m1: f32 = r.data.iter().sum::<f32>() / 4.0;
        assert!((m0 - m1).abs() < 1e-6);
        let r3 = f.resized(3, 3);
        let m3: f32 = r3.data.iter().sum::<f32>() / 9.0;
        assert!((m0 - m3).abs() < 1e-6);
    }
}
