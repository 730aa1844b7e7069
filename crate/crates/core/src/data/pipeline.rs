//! Curation stages, each reading the previous stage's JSON-lines output from
//! the same directory.
//!
//! | stage    | reads             | writes                                            |
//! |----------|-------------------|---------------------------------------------------|
//! | synth    |                   | `raw/*.clip`, `raw.jsonl`                         |
//! | filter   | `raw.jsonl`       | `filtered.jsonl`                                  |
//! | score    | `filtered.jsonl`  | `scored.jsonl`, `thresholds.json`, `retained.jsonl` |
//! | cut      | `retained.jsonl`  | `clips/*.clip`, `cut.jsonl`                       |
//! | annotate | `cut.jsonl`       | `manifest.jsonl`                                  |

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::mol::{validate_scales, DEFAULT_SCALES};
use crate::rng::SeedStream;

use super::caption::{annotate, CaptionRequest, CaptionerConfig};
use super::clipfile::{read_clip, write_clip, ClipDtype};
use super::curate::{
    derive_thresholds, filter_candidates, multi_scale_cut, threshold_filter, ThresholdConfig, DEFAULT_F_MAX,
};
use super::manifest::{read_jsonl, write_jsonl, write_manifest, ManifestRecord, Split, VideoRecord};
use super::scores::{clip_score, flow_score, FlowEstimator, GrayscaleFeatures, KnownFlow, PyramidFlow};
use super::synth::{synth_generate, SynthConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowEstimatorKind {
    #[default]
    Pyramid,
    /// Exact displacement from the synthetic scene description.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub synth: SynthConfig,
    pub f_max: usize,
    pub scales: Vec<usize>,
    pub thresholds: ThresholdConfig,
    pub flow_estimator: FlowEstimatorKind,
    pub clip_dtype: ClipDtype,
    /// Source videos held out for benchmarking; all their clips go to the test split.
    pub test_videos: usize,
    pub captioner: CaptionerConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            synth: SynthConfig::default(),
            f_max: DEFAULT_F_MAX,
            scales: DEFAULT_SCALES.to_vec(),
            thresholds: ThresholdConfig::default(),
            flow_estimator: FlowEstimatorKind::default(),
            clip_dtype: ClipDtype::default(),
            test_videos: 20,
            captioner: CaptionerConfig::default(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        validate_scales(&self.scales)?;
        if self.f_max < 2 {
            return Err(SemfiError::Config(format!("f_max must be at least 2, got {}", self.f_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Filter,
    Score,
    Cut,
    Annotate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Synth, Stage::Filter, Stage::Score, Stage::Cut, Stage::Annotate];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub inputs: usize,
    pub outputs: usize,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| SemfiError::io(p, e))
}

fn stage_synth(cfg: &DataConfig, seed: SeedStream, out: &Path) -> Result<StageSummary> {
    ensure_dir(&out.join("raw"))?;
    let mut records = Vec::with_capacity(cfg.synth.num_videos);
    for v in synth_generate(&cfg.synth, seed)? {
        let v = v?;
        let path = format!("raw/{}.clip", v.video_id);
        write_clip(&out.join(&path), &v.clip, ClipDtype::U8, None)?;
        records.push(VideoRecord {
            video_id: v.video_id,
            path,
            n: v.clip.n_frames,
            h: v.clip.height,
            w: v.clip.width,
            c: v.clip.channels,
            fps: v.clip.fps,
            meta: v.meta,
            s_c: None,
            s_f: None,
        });
    }
    write_jsonl(&out.join("raw.jsonl"), &records)?;
    Ok(StageSummary {
        stage: Stage::Synth,
        inputs: 0,
        outputs: records.len(),
    })
}

fn stage_filter(cfg: &DataConfig, out: &Path) -> Result<StageSummary> {
    let raw: Vec<VideoRecord> = read_jsonl(&out.join("raw.jsonl"))?;
    let inputs = raw.len();
    let kept = filter_candidates(raw, cfg.f_max, |r| (r.fps, r.n))?;
    write_jsonl(&out.join("filtered.jsonl"), &kept)?;
    Ok(StageSummary {
        stage: Stage::Filter,
        inputs,
        outputs: kept.len(),
    })
}

fn stage_score(cfg: &DataConfig, out: &Path) -> Result<StageSummary> {
    let mut recs: Vec<VideoRecord> = read_jsonl(&out.join("filtered.jsonl"))?;
    let features = GrayscaleFeatures::default();
    for r in &mut recs {
        let (_, clip) = read_clip(&out.join(&r.path))?;
        let (first, last) = (clip.first(), clip.last());
        r.s_c = Some(clip_score(&first, &last, &features)?);
        let est: Box<dyn FlowEstimator> = match cfg.flow_estimator {
            FlowEstimatorKind::Pyramid => Box::new(PyramidFlow::default()),
            FlowEstimatorKind::GroundTruth => Box::new(KnownFlow {
                field: r.meta.flow_between(0, r.n - 1, r.n, r.h, r.w),
            }),
        };
        r.s_f = Some(flow_score(&first, &last, est.as_ref())?);
    }
    write_jsonl(&out.join("scored.jsonl"), &recs)?;
    let pairs: Vec<(f64, f64)> = recs.iter().map(scores_of).collect();
    let inputs = recs.len();
    let kept = if pairs.is_empty() {
        recs
    } else {
        let t = derive_thresholds(&pairs, cfg.thresholds)?;
        std::fs::write(out.join("thresholds.json"), serde_json::to_vec_pretty(&t)?)
            .map_err(|e| SemfiError::io(out.join("thresholds.json"), e))?;
        threshold_filter(recs, &t, scores_of)
    };
    write_jsonl(&out.join("retained.jsonl"), &kept)?;
    Ok(StageSummary {
        stage: Stage::Score,
        inputs,
        outputs: kept.len(),
    })
}

fn scores_of(r: &VideoRecord) -> (f64, f64) {
    (r.s_c.unwrap_or(f64::NAN), r.s_f.unwrap_or(f64::NAN))
}

/// Source videos assigned to the test split: a seeded shuffle, first `count` taken.
pub fn test_video_ids(ids: &[String], count: usize, seed: SeedStream) -> BTreeSet<String> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    sorted.shuffle(&mut seed.derive("split").rng());
    sorted.into_iter().take(count).collect()
}

fn stage_cut(cfg: &DataConfig, seed: SeedStream, out: &Path) -> Result<StageSummary> {
    let recs: Vec<VideoRecord> = read_jsonl(&out.join("retained.jsonl"))?;
    ensure_dir(&out.join("clips"))?;
    let ids: Vec<String> = recs.iter().map(|r| r.video_id.clone()).collect();
    let test = test_video_ids(&ids, cfg.test_videos, seed);
    let mut manifest = Vec::new();
    for r in &recs {
        let (s_c, s_f) = scores_of(r);
        if s_c.is_nan() || s_f.is_nan() {
            return Err(SemfiError::Data(format!("video {} was not scored", r.video_id)));
        }
        let (_, clip) = read_clip(&out.join(&r.path))?;
        for (s, start, mut cut) in multi_scale_cut(&clip, &cfg.scales)? {
            let clip_id = format!("{}_s{s:03}", r.video_id);
            let path = format!("clips/{clip_id}.clip");
            cut.caption.clear();
            write_clip(&out.join(&path), &cut, cfg.clip_dtype, None)?;
            manifest.push(ManifestRecord {
                clip_id,
                path,
                n: s,
                h: cut.height,
                w: cut.width,
                c: cut.channels,
                fps: cut.fps,
                caption: String::new(),
                s_c,
                s_f,
                source_video_id: r.video_id.clone(),
                scale_s: s,
                start_frame: start,
                split: if test.contains(&r.video_id) { Split::Test } else { Split::Train },
                flags: Vec::new(),
            });
        }
    }
    write_manifest(&out.join("cut.jsonl"), &manifest)?;
    Ok(StageSummary {
        stage: Stage::Cut,
        inputs: recs.len(),
        outputs: manifest.len(),
    })
}

fn stage_annotate(cfg: &DataConfig, out: &Path) -> Result<StageSummary> {
    let mut clips: Vec<ManifestRecord> = read_jsonl(&out.join("cut.jsonl"))?;
    let videos: Vec<VideoRecord> = read_jsonl(&out.join("retained.jsonl"))?;
    let captioner = cfg.captioner.build();
    let mut flagged = 0;
    for rec in &mut clips {
        let meta = videos.iter().find(|v| v.video_id == rec.source_video_id).map(|v| &v.meta);
        let clip = rec.load(out)?;
        match annotate(&CaptionRequest { clip: &clip, meta }, captioner.as_ref()) {
            Ok(c) => rec.caption = c,
            Err(flag) => {
                flagged += 1;
                rec.caption.clear();
                if !rec.flags.iter().any(|f| f == flag) {
                    rec.flags.push(flag.to_string());
                }
            }
        }
    }
    if flagged > 0 {
        log::warn!("{flagged} clips flagged without captions");
    }
    write_manifest(&out.join(MANIFEST_FILE), &clips)?;
    Ok(StageSummary {
        stage: Stage::Annotate,
        inputs: clips.len(),
        outputs: clips.len() - flagged,
    })
}

pub fn run_stage(stage: Stage, cfg: &DataConfig, seed: SeedStream, out: &Path) -> Result<StageSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    let s = match stage {
        Stage::Synth => stage_synth(cfg, seed, out)?,
        Stage::Filter => stage_filter(cfg, out)?,
        Stage::Score => stage_score(cfg, out)?,
        Stage::Cut => stage_cut(cfg, seed, out)?,
        Stage::Annotate => stage_annotate(cfg, out)?,
    };
    log::info!("{:?}: {} in, {} out", s.stage, s.inputs, s.outputs);
    Ok(s)
}

/// Runs every stage in order and returns their summaries.
pub fn run_all(cfg: &DataConfig, seed: SeedStream, out: &Path) -> Result<Vec<StageSummary>> {
    Stage::ALL.iter().map(|&s| run_stage(s, cfg, seed, out)).collect()
}
