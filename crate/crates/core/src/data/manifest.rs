//! JSON-lines records for source videos and curated clips.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::video::VideoClip;

use super::clipfile::read_clip;
use super::synth::SynthMeta;

/// A source video as it moves through synth, filter, and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub path: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub fps: u32,
    pub meta: SynthMeta,
    #[serde(rename = "S_c", default, skip_serializing_if = "Option::is_none")]
    pub s_c: Option<f64>,
    #[serde(rename = "S_f", default, skip_serializing_if = "Option::is_none")]
    pub s_f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One curated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub clip_id: String,
    pub path: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub fps: u32,
    pub caption: String,
    #[serde(rename = "S_c")]
    pub s_c: f64,
    #[serde(rename = "S_f")]
    pub s_f: f64,
    pub source_video_id: String,
    pub scale_s: usize,
    pub start_frame: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ManifestRecord {
    /// Reads the clip file, relative to `root`, with the record's caption attached.
    pub fn load(&self, root: &Path) -> Result<VideoClip> {
        let (_, mut clip) = read_clip(&root.join(&self.path))?;
        if clip.n_frames != self.n || (clip.height, clip.width, clip.channels) != (self.h, self.w, self.c) {
            return Err(SemfiError::Data(format!(
                "clip {} on disk is {}x{}x{}x{}, manifest says {}x{}x{}x{}",
                self.clip_id, clip.n_frames, clip.height, clip.width, clip.channels, self.n, self.h, self.w, self.c
            )));
        }
        clip.caption = self.caption.clone();
        Ok(clip)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| SemfiError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| SemfiError::io(path, e))?;
    }
    w.flush().map_err(|e| SemfiError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| SemfiError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SemfiError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| SemfiError::format(format!("{}:{}", path.display(), i + 1), e.to_string()))?,
        );
    }
    Ok(out)
}

/// Writes clip records sorted by `clip_id`.
pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    write_jsonl(path, &sorted)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    read_jsonl(path)
}

/// Unique ids, `N == scale_s`, and every path present under `root`.
pub fn check_manifest(records: &[ManifestRecord], root: &Path) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(&r.clip_id) {
            return Err(SemfiError::Data(format!("duplicate clip_id {}", r.clip_id)));
        }
        if r.n != r.scale_s {
            return Err(SemfiError::Data(format!("{} has N={} but scale {}", r.clip_id, r.n, r.scale_s)));
        }
        if !root.join(&r.path).is_file() {
            return Err(SemfiError::Data(format!("{} points at missing file {}", r.clip_id, r.path)));
        }
    }
    Ok(())
}
