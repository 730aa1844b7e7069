//! Candidate filtering, score thresholds, and multi-scale cutting.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::video::VideoClip;

pub const DEFAULT_F_MAX: usize = 81;
pub const MAX_FPS: u32 = 30;

/// Keep-rule for source videos: `fps <= 30` and `f_max <= frames <= 4 f_max`.
pub fn passes_candidate_filter(fps: u32, frames: usize, f_max: usize) -> bool {
    fps <= MAX_FPS && frames >= f_max && frames <= 4 * f_max
}

/// Retains the items whose `(fps, frames)` pass [`passes_candidate_filter`].
pub fn filter_candidates<T>(items: Vec<T>, f_max: usize, key: impl Fn(&T) -> (u32, usize)) -> Result<Vec<T>> {
    if f_max < 2 {
        return Err(SemfiError::Config(format!("f_max must be at least 2, got {f_max}")));
    }
    Ok(items
        .into_iter()
        .filter(|it| {
            let (fps, n) = key(it);
            passes_candidate_filter(fps, n, f_max)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdConfig {
    /// Bounds at the given percentiles of the observed scores.
    Percentile { low: f64, high: f64 },
    Absolute {
        clip_low: f64,
        clip_high: f64,
        flow_low: f64,
        flow_high: f64,
    },
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig::Percentile { low: 5.0, high: 95.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreThresholds {
    pub clip_low: f64,
    pub clip_high: f64,
    pub flow_low: f64,
    pub flow_high: f64,
    pub derivation: ThresholdConfig,
}

impl ScoreThresholds {
    pub fn unbounded() -> Self {
        ScoreThresholds {
            clip_low: f64::NEG_INFINITY,
            clip_high: f64::INFINITY,
            flow_low: f64::NEG_INFINITY,
            flow_high: f64::INFINITY,
            derivation: ThresholdConfig::Absolute {
                clip_low: f64::NEG_INFINITY,
                clip_high: f64::INFINITY,
                flow_low: f64::NEG_INFINITY,
                flow_high: f64::INFINITY,
            },
        }
    }

    pub fn keeps(&self, s_c: f64, s_f: f64) -> bool {
        self.clip_low <= s_c && s_c <= self.clip_high && self.flow_low <= s_f && s_f <= self.flow_high
    }
}

/// Percentile of sorted data with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(SemfiError::InsufficientData("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(SemfiError::Config(format!("percentile {p} outside [0, 100]")));
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Resolves a threshold config against observed `(S_c, S_f)` pairs.
pub fn derive_thresholds(scores: &[(f64, f64)], cfg: ThresholdConfig) -> Result<ScoreThresholds> {
    let t = match cfg {
        ThresholdConfig::Percentile { low, high } => {
            if low >= high {
                return Err(SemfiError::Config(format!("percentile low {low} must be below high {high}")));
            }
            let mut c: Vec<f64> = scores.iter().map(|s| s.0).collect();
            let mut f: Vec<f64> = scores.iter().map(|s| s.1).collect();
            c.sort_by(f64::total_cmp);
            f.sort_by(f64::total_cmp);
            ScoreThresholds {
                clip_low: percentile(&c, low)?,
                clip_high: percentile(&c, high)?,
                flow_low: percentile(&f, low)?,
                flow_high: percentile(&f, high)?,
                derivation: cfg,
            }
        }
        ThresholdConfig::Absolute {
            clip_low,
            clip_high,
            flow_low,
            flow_high,
        } => {
            if clip_low >= clip_high || flow_low >= flow_high {
                return Err(SemfiError::Config("absolute thresholds need low < high".into()));
            }
            ScoreThresholds {
                clip_low,
                clip_high,
                flow_low,
                flow_high,
                derivation: cfg,
            }
        }
    };
    Ok(t)
}

pub fn threshold_filter<T>(items: Vec<T>, t: &ScoreThresholds, scores: impl Fn(&T) -> (f64, f64)) -> Vec<T> {
    items
        .into_iter()
        .filter(|it| {
            let (c, f) = scores(it);
            t.keeps(c, f)
        })
        .collect()
}

/// First frame of the length-`s` window centred on an `f`-frame video.
pub fn cut_start(f: usize, s: usize) -> Option<usize> {
    (s <= f).then(|| f / 2 - s / 2)
}

/// One centred clip per scale that fits, as `(s, start, clip)`.
pub fn multi_scale_cut(video: &VideoClip, scales: &[usize]) -> Result<Vec<(usize, usize, VideoClip)>> {
    let f = video.n_frames;
    if scales.iter().all(|&s| s > f) {
        log::warn!("video with {f} frames is shorter than every scale {scales:?}; nothing cut");
        return Ok(Vec::new());
    }
    scales
        .iter()
        .filter_map(|&s| cut_start(f, s).map(|start| (s, start)))
        .map(|(s, start)| Ok((s, start, video.sub_clip(start, s)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_boundaries() {
        assert!(!passes_candidate_filter(60, 100, 81));
        assert!(passes_candidate_filter(24, 81, 81));
        assert!(passes_candidate_filter(30, 324, 81));
        assert!(!passes_candidate_filter(24, 400, 81));
        assert!(!passes_candidate_filter(24, 80, 81));
    }

    #[test]
    fn centred_cut_start() {
        assert_eq!(cut_start(162, 5), Some(79));
        assert_eq!(cut_start(81, 81), Some(0));
        assert_eq!(cut_start(80, 81), None);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0).unwrap(), 5.0);
        assert!((percentile(&v, 5.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbounded_keeps_everything() {
        let items = vec![(-1.0, 0.0), (1.0, 1e9)];
        assert_eq!(threshold_filter(items.clone(), &ScoreThresholds::unbounded(), |x| *x), items);
    }
}
