//! Procedural shape videos with known trajectories and captions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::rng::SeedStream;
use crate::video::VideoClip;

use super::scores::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
        }
    }
}

/// Named palette entries; values are exact multiples of 1/255 so `u8` storage is lossless.
pub const PALETTE: [(&str, [u8; 3]); 8] = [
    ("red", [230, 40, 40]),
    ("green", [40, 200, 60]),
    ("blue", [50, 80, 230]),
    ("yellow", [235, 220, 40]),
    ("white", [245, 245, 245]),
    ("cyan", [40, 220, 220]),
    ("magenta", [220, 50, 220]),
    ("orange", [245, 140, 30]),
];

pub const BACKGROUND: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

impl Side {
    const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Top, Side::Bottom];

    fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Top => "top",
            Side::Bottom => "bottom",
        }
    }

    /// Unit vector pointing out of the frame through this side.
    fn outward(self) -> (f64, f64) {
        match self {
            Side::Left => (-1.0, 0.0),
            Side::Right => (1.0, 0.0),
            Side::Top => (0.0, -1.0),
            Side::Bottom => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Motion {
    /// Straight line; `(dx, dy)` is the total displacement in pixels.
    Linear { dx: f64, dy: f64 },
    /// Circle through the start point.
    Circular { radius: f64, turns: f64, clockwise: bool },
    /// Slides in from outside the frame and stops at the start point.
    Enter { side: Side, distance: f64 },
    /// Slides from the start point out of the frame.
    Exit { side: Side, distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub color: String,
    pub rgb: [u8; 3],
    /// Half-extent in pixels.
    pub size: f64,
    pub start: (f64, f64),
    pub motion: Motion,
}

impl ShapeSpec {
    /// Centre at normalised time `tau` in `[0, 1]`.
    pub fn position(&self, tau: f64) -> (f64, f64) {
        let (x0, y0) = self.start;
        match self.motion {
            Motion::Linear { dx, dy } => (x0 + tau * dx, y0 + tau * dy),
            Motion::Circular {
                radius,
                turns,
                clockwise,
            } => {
                let sign = if clockwise { 1.0 } else { -1.0 };
                let phi = sign * std::f64::consts::TAU * turns * tau;
                // Centre sits `radius` to the left of the start point.
                (x0 - radius + radius * phi.cos(), y0 + radius * phi.sin())
            }
            Motion::Enter { side, distance } => {
                let (ox, oy) = side.outward();
                let k = (1.0 - tau) * distance;
                (x0 + ox * k, y0 + oy * k)
            }
            Motion::Exit { side, distance } => {
                let (ox, oy) = side.outward();
                (x0 + ox * tau * distance, y0 + oy * tau * distance)
            }
        }
    }

    pub fn contains(&self, centre: (f64, f64), px: f64, py: f64) -> bool {
        let (dx, dy) = (px - centre.0, py - centre.1);
        let s = self.size;
        match self.kind {
            ShapeKind::Circle => dx * dx + dy * dy <= s * s,
            ShapeKind::Square => dx.abs() <= s && dy.abs() <= s,
            ShapeKind::Triangle => dy >= -s && dy <= s && dx.abs() <= (dy + s) / 2.0,
        }
    }

    pub fn is_moving(&self) -> bool {
        match self.motion {
            Motion::Linear { dx, dy } => dx != 0.0 || dy != 0.0,
            Motion::Circular { radius, turns, .. } => radius != 0.0 && turns != 0.0,
            Motion::Enter { distance, .. } | Motion::Exit { distance, .. } => distance != 0.0,
        }
    }

    pub fn motion_phrase(&self) -> String {
        if !self.is_moving() {
            return "stays still".into();
        }
        match self.motion {
            Motion::Linear { dx, dy } => {
                let dir = if dx.abs() >= dy.abs() {
                    if dx > 0.0 {
                        "right"
                    } else {
                        "left"
                    }
                } else if dy > 0.0 {
                    "down"
                } else {
                    "up"
                };
                format!("moves {dir}")
            }
            Motion::Circular { clockwise, .. } => {
                format!("circles {}", if clockwise { "clockwise" } else { "counterclockwise" })
            }
            Motion::Enter { side, .. } => format!("enters from the {}", side.name()),
            Motion::Exit { side, .. } => format!("exits to the {}", side.name()),
        }
    }
}

/// Everything needed to re-render a synthetic video and describe it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub shapes: Vec<ShapeSpec>,
}

impl SynthMeta {
    pub fn caption(&self) -> String {
        let parts: Vec<String> = self
            .shapes
            .iter()
            .map(|s| format!("a {} {} {}", s.color, s.kind.name(), s.motion_phrase()))
            .collect();
        parts.join(" and ")
    }

    fn tau(i: usize, n: usize) -> f64 {
        if n <= 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64
        }
    }

    /// Index of the topmost shape covering pixel `(x, y)` at time `tau`.
    fn cover(&self, tau: f64, x: usize, y: usize) -> Option<usize> {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        self.shapes
            .iter()
            .enumerate()
            .rev()
            .find(|(_, s)| s.contains(s.position(tau), px, py))
            .map(|(k, _)| k)
    }

    pub fn render(&self, n: usize, h: usize, w: usize, c: usize, fps: u32, caption: &str) -> Result<VideoClip> {
        if c != 1 && c != 3 {
            return Err(SemfiError::Config(format!("synthetic videos need 1 or 3 channels, got {c}")));
        }
        let luma = |rgb: [u8; 3]| -> u8 {
            (0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2])).round() as u8
        };
        let mut data = Vec::with_capacity(n * h * w * c);
        for i in 0..n {
            let tau = Self::tau(i, n);
            for y in 0..h {
                for x in 0..w {
                    let rgb = self
                        .cover(tau, x, y)
                        .map_or([BACKGROUND; 3], |k| self.shapes[k].rgb);
                    if c == 3 {
                        data.extend(rgb.iter().map(|&v| f32::from(v) / 255.0));
                    } else {
                        data.push(f32::from(luma(rgb)) / 255.0);
                    }
                }
            }
        }
        VideoClip::new(n, h, w, c, data, fps, caption)
    }

    /// Ground-truth displacement of each pixel of frame `a` to frame `b` of an
    /// `n`-frame rendering; background pixels do not move.
    pub fn flow_between(&self, a: usize, b: usize, n: usize, h: usize, w: usize) -> FlowField {
        let (ta, tb) = (Self::tau(a, n), Self::tau(b, n));
        let mut field = FlowField::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                if let Some(k) = self.cover(ta, x, y) {
                    let (pa, pb) = (self.shapes[k].position(ta), self.shapes[k].position(tb));
                    field.u[y * w + x] = pb.0 - pa.0;
                    field.v[y * w + x] = pb.1 - pa.1;
                }
            }
        }
        field
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub fps_choices: Vec<u32>,
    pub min_frames: usize,
    pub max_frames: usize,
    pub max_shapes: usize,
    /// Multiplies every trajectory; 0 gives static videos.
    pub motion_amplitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 160,
            height: 32,
            width: 32,
            channels: 3,
            fps_choices: vec![12, 24, 30, 60],
            min_frames: 81,
            max_frames: 324,
            max_shapes: 3,
            motion_amplitude: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(SemfiError::Config("synthetic frames must be at least 8x8".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(SemfiError::Config(format!(
                "synthetic videos need 1 or 3 channels, got {}",
                self.channels
            )));
        }
        if self.fps_choices.is_empty() || self.fps_choices.contains(&0) {
            return Err(SemfiError::Config("fps_choices must be non-empty and positive".into()));
        }
        if self.min_frames < 2 || self.min_frames > self.max_frames {
            return Err(SemfiError::Config(format!(
                "frame range [{}, {}] is invalid",
                self.min_frames, self.max_frames
            )));
        }
        if self.max_shapes == 0 || self.max_shapes > PALETTE.len() {
            return Err(SemfiError::Config(format!(
                "max_shapes must be in 1..={}",
                PALETTE.len()
            )));
        }
        if !self.motion_amplitude.is_finite() || self.motion_amplitude < 0.0 {
            return Err(SemfiError::Config("motion_amplitude must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One generated source video.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub video_id: String,
    pub clip: VideoClip,
    pub meta: SynthMeta,
}

pub fn video_id(i: usize) -> String {
    format!("v{i:05}")
}

fn random_shape(cfg: &SynthConfig, rng: &mut impl Rng) -> ShapeSpec {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let unit = w.min(h) / 32.0;
    let size = rng.gen_range(3.0..6.0) * unit;
    let start = (rng.gen_range(size..w - size), rng.gen_range(size..h - size));
    let amp = cfg.motion_amplitude;
    let motion = match rng.gen_range(0..4) {
        0 => {
            let angle = f64::from(rng.gen_range(0..8u8)) * std::f64::consts::FRAC_PI_4;
            let len = rng.gen_range(0.25..0.6) * w * amp;
            Motion::Linear {
                dx: len * angle.cos(),
                dy: len * angle.sin(),
            }
        }
        1 => Motion::Circular {
            radius: rng.gen_range(0.1..0.25) * w * amp,
            turns: rng.gen_range(0.5..1.5),
            clockwise: rng.gen(),
        },
        2 => Motion::Enter {
            side: *Side::ALL.choose(rng).expect("non-empty"),
            distance: (w / 2.0 + 2.0 * size) * amp,
        },
        _ => Motion::Exit {
            side: *Side::ALL.choose(rng).expect("non-empty"),
            distance: (w / 2.0 + 2.0 * size) * amp,
        },
    };
    let (color, rgb) = *PALETTE.choose(rng).expect("non-empty");
    ShapeSpec {
        kind: *ShapeKind::ALL.choose(rng).expect("non-empty"),
        color: color.into(),
        rgb,
        size,
        start,
        motion,
    }
}

/// Frame count, fps, and scene of video `index`; deterministic in `(cfg, seed, index)`.
pub fn draw_video(cfg: &SynthConfig, seed: SeedStream, index: usize) -> (usize, u32, SynthMeta) {
    let mut rng = seed.derive("synth").index(index as u64).rng();
    let n = rng.gen_range(cfg.min_frames..=cfg.max_frames);
    let fps = *cfg.fps_choices.choose(&mut rng).expect("validated non-empty");
    let count = rng.gen_range(1..=cfg.max_shapes);
    let mut shapes: Vec<ShapeSpec> = Vec::with_capacity(count);
    while shapes.len() < count {
        let s = random_shape(cfg, &mut rng);
        // Distinct colours keep captions unambiguous.
        if shapes.iter().all(|o| o.color != s.color) {
            shapes.push(s);
        }
    }
    (n, fps, SynthMeta { shapes })
}

pub fn generate_video(cfg: &SynthConfig, seed: SeedStream, index: usize) -> Result<SynthVideo> {
    let (n, fps, meta) = draw_video(cfg, seed, index);
    let caption = meta.caption();
    let clip = meta.render(n, cfg.height, cfg.width, cfg.channels, fps, &caption)?;
    Ok(SynthVideo {
        video_id: video_id(index),
        clip,
        meta,
    })
}

/// The whole raw corpus, generated lazily.
pub fn synth_generate(cfg: &SynthConfig, seed: SeedStream) -> Result<impl Iterator<Item = Result<SynthVideo>> + '_> {
    cfg.validate()?;
    Ok((0..cfg.num_videos).map(move |i| generate_video(cfg, seed, i)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_videos: 6,
            min_frames: 10,
            max_frames: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a: Vec<_> = synth_generate(&small(), SeedStream::new(4)).unwrap().map(|v| v.unwrap()).collect();
        let b: Vec<_> = synth_generate(&small(), SeedStream::new(4)).unwrap().map(|v| v.unwrap()).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn zero_amplitude_is_static() {
        let cfg = SynthConfig {
            motion_amplitude: 0.0,
            ..small()
        };
        for v in synth_generate(&cfg, SeedStream::new(1)).unwrap() {
            let v = v.unwrap();
            assert_eq!(v.clip.first(), v.clip.last());
            assert!(v.clip.caption.contains("stays still"));
        }
    }

    #[test]
    fn caption_names_shape_colour_and_motion() {
        let meta = SynthMeta {
            shapes: vec![ShapeSpec {
                kind: ShapeKind::Circle,
                color: "red".into(),
                rgb: PALETTE[0].1,
                size: 4.0,
                start: (10.0, 16.0),
                motion: Motion::Linear { dx: 8.0, dy: 0.0 },
            }],
        };
        assert_eq!(meta.caption(), "a red circle moves right");
        let flow = meta.flow_between(0, 9, 10, 32, 32);
        assert_eq!(flow.u[16 * 32 + 10], 8.0);
        assert_eq!(flow.u[0], 0.0);
    }

    #[test]
    fn frame_counts_stay_in_range() {
        for i in 0..50 {
            let (n, fps, meta) = draw_video(&SynthConfig::default(), SeedStream::new(2), i);
            assert!((81..=324).contains(&n));
            assert!([12, 24, 30, 60].contains(&fps));
            assert!((1..=3).contains(&meta.shapes.len()));
        }
    }
}
