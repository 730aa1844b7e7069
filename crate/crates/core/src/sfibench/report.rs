//! Per-scale score matrix with a pooled row and a cross-scale variance row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    fn arrow(self) -> &'static str {
        match self {
            Direction::HigherBetter => "↑",
            Direction::LowerBetter => "↓",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSpec {
    pub key: &'static str,
    pub label: &'static str,
    pub direction: Direction,
    /// False for set-level metrics such as the Fréchet distance.
    pub per_clip: bool,
    /// Interface only; no predictor is bundled.
    pub stub: bool,
}

const fn spec(key: &'static str, label: &'static str, direction: Direction, per_clip: bool, stub: bool) -> MetricSpec {
    MetricSpec {
        key,
        label,
        direction,
        per_clip,
        stub,
    }
}

pub const METRICS: [MetricSpec; 11] = [
    spec("video_lpips", "LPIPS", Direction::LowerBetter, true, false),
    spec("fid", "FID", Direction::LowerBetter, false, false),
    spec("psnr", "PSNR", Direction::HigherBetter, true, false),
    spec("ssim", "SSIM", Direction::HigherBetter, true, false),
    spec("frame_lpips", "LPIPS (frame)", Direction::LowerBetter, true, false),
    spec("semantic", "Semantic", Direction::HigherBetter, true, false),
    spec("tf", "TF", Direction::HigherBetter, true, false),
    spec("ms", "MS", Direction::HigherBetter, true, false),
    spec("dd", "DD", Direction::HigherBetter, true, false),
    spec("aq", "AQ", Direction::HigherBetter, true, true),
    spec("iq", "IQ", Direction::HigherBetter, true, true),
];

pub fn metric_spec(key: &str) -> Option<&'static MetricSpec> {
    METRICS.iter().find(|m| m.key == key)
}

pub const PROXY_BANNER: &str = "proxy metrics: perceptual, Fréchet, semantic, and flow scores come from fixed seeded \
substitutes and are not comparable with values computed by pretrained networks";

/// Log10 of a variance; variances at or below 1e-12 collapse to a floor sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Log10Variance {
    Value(f64),
    BelowFloor,
    Unavailable,
}

impl std::fmt::Display for Log10Variance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Log10Variance::Value(v) => write!(f, "{v:.4}"),
            Log10Variance::BelowFloor => f.write_str("< -12"),
            Log10Variance::Unavailable => f.write_str("n/a"),
        }
    }
}

/// Divide-by-n variance.
pub fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Log10 population variance of per-scale values.
pub fn cross_scale_variance(values: &[f64]) -> Result<Log10Variance> {
    if values.len() < 2 {
        return Err(SemfiError::InsufficientData(format!(
            "variance across scales needs at least 2 scales, got {}",
            values.len()
        )));
    }
    let var = population_variance(values);
    if var <= 0.0 || var.log10() < -12.0 {
        return Ok(Log10Variance::BelowFloor);
    }
    Ok(Log10Variance::Value(var.log10()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScores {
    pub clip_id: String,
    pub scale: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    pub direction: Direction,
    pub per_clip_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scales: Vec<usize>,
    /// Sorted by `clip_id`.
    pub per_clip: Vec<ClipScores>,
    pub per_scale: BTreeMap<String, BTreeMap<usize, f64>>,
    pub all: BTreeMap<String, f64>,
    pub log10_variance: BTreeMap<String, Log10Variance>,
    pub failures: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl BenchReport {
    /// Aggregates per-clip scores; set-level values (Fréchet) are passed per scale and pooled.
    pub fn assemble(
        scales: &[usize],
        mut per_clip: Vec<ClipScores>,
        set_level: BTreeMap<String, (BTreeMap<usize, f64>, Option<f64>)>,
        failures: usize,
    ) -> Self {
        per_clip.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        let mut per_scale = BTreeMap::new();
        let mut all = BTreeMap::new();
        let mut log10_variance = BTreeMap::new();
        for m in METRICS.iter().filter(|m| !m.stub) {
            let (cells, pooled) = if m.per_clip {
                let mut cells = BTreeMap::new();
                for &s in scales {
                    let v: Vec<f64> = per_clip
                        .iter()
                        .filter(|c| c.scale == s)
                        .filter_map(|c| c.values.get(m.key).copied())
                        .collect();
                    if let Some(x) = mean(&v) {
                        cells.insert(s, x);
                    }
                }
                let pooled: Vec<f64> = per_clip.iter().filter_map(|c| c.values.get(m.key).copied()).collect();
                (cells, mean(&pooled))
            } else {
                set_level.get(m.key).cloned().unwrap_or_default()
            };
            let values: Vec<f64> = cells.values().copied().collect();
            log10_variance.insert(
                m.key.to_string(),
                cross_scale_variance(&values).unwrap_or(Log10Variance::Unavailable),
            );
            if let Some(p) = pooled {
                all.insert(m.key.to_string(), p);
            }
            per_scale.insert(m.key.to_string(), cells);
        }
        BenchReport {
            scales: scales.to_vec(),
            per_clip,
            per_scale,
            all,
            log10_variance,
            failures,
        }
    }

    pub fn absent_scales(&self) -> Vec<usize> {
        self.scales
            .iter()
            .copied()
            .filter(|s| !self.per_clip.iter().any(|c| c.scale == *s))
            .collect()
    }

    /// The pooled result for one per-clip metric with its per-clip values.
    pub fn metric_result(&self, key: &str) -> Option<MetricResult> {
        let spec = metric_spec(key).filter(|m| m.per_clip && !m.stub)?;
        Some(MetricResult {
            name: spec.label.to_string(),
            value: *self.all.get(key)?,
            direction: spec.direction,
            per_clip_values: self.per_clip.iter().filter_map(|c| c.values.get(key).copied()).collect(),
        })
    }

    fn cell(&self, key: &str, scale: usize) -> String {
        match metric_spec(key) {
            Some(m) if m.stub => "n/a".into(),
            _ => self
                .per_scale
                .get(key)
                .and_then(|c| c.get(&scale))
                .map_or_else(|| "absent".into(), |v| format!("{v:.6}")),
        }
    }

    fn all_cell(&self, key: &str) -> String {
        self.all.get(key).map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
    }

    fn var_cell(&self, key: &str) -> String {
        self.log10_variance
            .get(key)
            .map_or_else(|| "n/a".into(), |v| v.to_string())
    }

    /// Rows are metrics; columns are scales, `All`, and `log10Var`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for s in &self.scales {
            let _ = write!(out, ",{s}");
        }
        out.push_str(",All,log10Var\n");
        for m in METRICS {
            out.push_str(m.key);
            for &s in &self.scales {
                let _ = write!(out, ",{}", self.cell(m.key, s));
            }
            let _ = writeln!(out, ",{},{}", self.all_cell(m.key), self.var_cell(m.key));
        }
        out
    }

    /// One row per clip; set-level and stub metrics are omitted.
    pub fn per_clip_csv(&self) -> String {
        let keys: Vec<&str> = METRICS.iter().filter(|m| m.per_clip && !m.stub).map(|m| m.key).collect();
        let mut out = format!("clip_id,scale,{}\n", keys.join(","));
        for c in &self.per_clip {
            let _ = write!(out, "{},{}", c.clip_id, c.scale);
            for k in &keys {
                match c.values.get(*k) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.6}");
                    }
                    None => out.push_str(",n/a"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Scales as rows, metrics as columns, then the pooled and variance rows.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("> {PROXY_BANNER}\n\n");
        let _ = writeln!(
            out,
            "> log10 Var: population variance of the per-scale means; FID pools all frames for the All row. \
             Failed clips: {}.\n",
            self.failures
        );
        out.push_str("| Frames |");
        for m in METRICS {
            let _ = write!(out, " {}{} |", m.label, m.direction.arrow());
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(METRICS.len()));
        out.push('\n');
        for &s in &self.scales {
            let _ = write!(out, "| {s} |");
            for m in METRICS {
                let _ = write!(out, " {} |", self.cell(m.key, s));
            }
            out.push('\n');
        }
        out.push_str("| All |");
        for m in METRICS {
            let _ = write!(out, " {} |", self.all_cell(m.key));
        }
        out.push_str("\n| log10 Var |");
        for m in METRICS {
            let _ = write!(out, " {} |", self.var_cell(m.key));
        }
        out.push('\n');
        out
    }

    /// One bar chart per metric, bars in scale order.
    pub fn write_bar_charts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SemfiError::io(dir, e))?;
        let (bar, gap, height) = (24u32, 8u32, 120u32);
        for m in METRICS.iter().filter(|m| !m.stub) {
            let cells = match self.per_scale.get(m.key) {
                Some(c) if !c.is_empty() => c,
                _ => continue,
            };
            let peak = cells.values().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
            let width = gap + self.scales.len() as u32 * (bar + gap);
            let mut img = image::RgbImage::from_pixel(width, height, image::Rgb([255, 255, 255]));
            for (i, s) in self.scales.iter().enumerate() {
                let Some(v) = cells.get(s) else { continue };
                let bh = ((v.abs() / peak) * f64::from(height - 10)).round() as u32;
                let x0 = gap + i as u32 * (bar + gap);
                for x in x0..x0 + bar {
                    for y in height - bh..height {
                        img.put_pixel(x, y, image::Rgb([60, 90, 200]));
                    }
                }
            }
            let path = dir.join(format!("{}.png", m.key));
            img.save(&path)?;
        }
        Ok(())
    }
}
