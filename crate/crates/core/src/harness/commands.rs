//! Data, sample, bench, and report commands.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::conditioning::ImageEncoder;
use crate::data::clipfile::{read_clip, write_clip, ClipDtype};
use crate::data::manifest::{read_manifest, ManifestRecord, Split};
use crate::data::pipeline::StageSummary;
use crate::data::{run_all, run_stage, Stage, MANIFEST_FILE};
use crate::error::{Result, SemfiError};
use crate::model::{sample, Checkpoint, NoiseSchedule, SampleRequest, TextEncoder};
use crate::rng::SeedStream;
use crate::sfibench::{bench_run, BenchContext, BenchItem, BenchReport};
use crate::video::{Frame, VideoClip};

use super::config::ExperimentConfig;
use super::record::RunRecord;
use super::train::load_checkpoint;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PER_CLIP_CSV: &str = "per_clip.csv";
pub const REPORT_MD: &str = "report.md";

/// Runs one pipeline stage, or all of them, into `out`.
pub fn cmd_data(cfg: &ExperimentConfig, stage: Option<Stage>, out: &Path) -> Result<Vec<StageSummary>> {
    cfg.validate()?;
    let seed = SeedStream::new(cfg.train.seed).derive("data");
    let summaries = match stage {
        Some(s) => vec![run_stage(s, &cfg.data, seed, out)?],
        None => run_all(&cfg.data, seed, out)?,
    };
    cfg.save(&out.join("config.json"))?;
    let mut record = RunRecord::new("data", cfg.hash(), cfg.train.seed);
    record.outputs = summaries.iter().map(|s| format!("{:?}: {} -> {}", s.stage, s.inputs, s.outputs)).collect();
    record.write(out)?;
    Ok(summaries)
}

/// A loaded model ready to sample.
pub struct Generator {
    pub checkpoint: Checkpoint,
    encoder: Box<dyn ImageEncoder>,
    schedule: NoiseSchedule,
    text: TextEncoder,
}

impl Generator {
    pub fn load(path: &Path) -> Result<Self> {
        let (checkpoint, encoder) = load_checkpoint(path)?;
        Self::new(checkpoint, encoder)
    }

    pub fn new(checkpoint: Checkpoint, encoder: Box<dyn ImageEncoder>) -> Result<Self> {
        let c = &checkpoint.model.config;
        let schedule = NoiseSchedule::from_config(c)?;
        let text = TextEncoder::new(c.text_buckets, c.d_text, c.text_seed);
        Ok(Generator {
            checkpoint,
            encoder,
            schedule,
            text,
        })
    }

    /// Expert the adapters route `n` frames to, if experts exist.
    pub fn expert(&self, n: usize) -> Result<Option<usize>> {
        match &self.checkpoint.mol {
            Some((_, m)) => m.route(n),
            None => Ok(None),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        &self,
        first: &Frame,
        last: &Frame,
        caption: &str,
        n: usize,
        steps: usize,
        clamp: bool,
        seed: SeedStream,
        fps: u32,
    ) -> Result<VideoClip> {
        let text = self.text.encode(caption);
        let req = SampleRequest {
            first,
            last,
            text: &text,
            n_frames: n,
            steps,
            clamp_endpoints: clamp,
            seed,
            fps,
        };
        let mol = self.checkpoint.mol.as_ref().map(|(_, m)| m);
        let mut clip = sample(&self.checkpoint.model, mol, self.encoder.as_ref(), &self.schedule, &req)?;
        clip.caption = caption.to_string();
        Ok(clip)
    }
}

fn load_image(path: &Path, h: usize, w: usize, c: usize) -> Result<Frame> {
    let img = image::open(path)?;
    let f = Frame::from_image(&img, c)?;
    Ok(if f.height != h || f.width != w { f.resized(h, w) } else { f })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    pub first: PathBuf,
    pub last: PathBuf,
    pub text: String,
    pub frames: usize,
    pub steps: usize,
    pub seed: u64,
    pub clamp_endpoints: bool,
    pub fps: u32,
    pub out: PathBuf,
}

/// Generates one clip and writes it with the routed expert in its header.
pub fn cmd_sample(args: &SampleArgs) -> Result<Option<usize>> {
    let gen = Generator::load(&args.checkpoint)?;
    let c = &gen.checkpoint.model.config;
    let (h, w, ch) = (c.height, c.width, c.channels);
    let first = load_image(&args.first, h, w, ch)?;
    let last = load_image(&args.last, h, w, ch)?;
    let expert = gen.expert(args.frames)?;
    let clip = gen.generate(
        &first,
        &last,
        &args.text,
        args.frames,
        args.steps,
        args.clamp_endpoints,
        SeedStream::new(args.seed).derive("sample"),
        args.fps,
    )?;
    write_clip(&args.out, &clip, ClipDtype::F32, expert)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        let mut record = RunRecord::new("sample", String::new(), args.seed)
            .input("checkpoint", &args.checkpoint)?
            .input("first", &args.first)?
            .input("last", &args.last)?;
        record.outputs = vec![args.out.display().to_string()];
        record.write(dir)?;
    }
    Ok(expert)
}

/// Where generated clips come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchSource {
    Checkpoint(PathBuf),
    /// Pre-generated `{clip_id}.clip` files.
    ClipDir(PathBuf),
}

/// Test clips from the first `count` test-split source videos, sorted by id.
pub fn test_records(records: &[ManifestRecord], count: usize) -> Vec<ManifestRecord> {
    let sources: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|r| r.source_video_id.as_str())
        .collect();
    let keep: BTreeSet<&str> = sources.into_iter().take(count).collect();
    let mut out: Vec<ManifestRecord> = records
        .iter()
        .filter(|r| r.split == Split::Test && keep.contains(r.source_video_id.as_str()))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    out
}

/// Builds generated/reference pairs; clips that cannot be generated or read are counted as failures.
pub fn bench_items(cfg: &ExperimentConfig, source: &BenchSource, data_dir: &Path) -> Result<(Vec<BenchItem>, usize)> {
    let records = read_manifest(&data_dir.join(MANIFEST_FILE))?;
    let tests = test_records(&records, cfg.bench.test_videos);
    if tests.is_empty() {
        return Err(SemfiError::Data("manifest has no test clips".into()));
    }
    let generator = match source {
        BenchSource::Checkpoint(p) => Some(Generator::load(p)?),
        BenchSource::ClipDir(_) => None,
    };
    let root = SeedStream::new(cfg.bench.seed).derive("bench");
    let mut items = Vec::with_capacity(tests.len());
    let mut failures = 0;
    for rec in &tests {
        let reference = rec.load(data_dir)?;
        let made = match (&generator, source) {
            (Some(g), _) => {
                let (first, last) = (reference.first(), reference.last());
                let seed = root.derive(&rec.clip_id);
                let b = &cfg.bench;
                g.generate(&first, &last, &rec.caption, rec.n, b.sampling_steps, b.clamp_endpoints, seed, rec.fps)
                    .and_then(|gen| {
                        let endpoint = if b.clamp_endpoints && b.unclamped_frame_fidelity {
                            Some(g.generate(&first, &last, &rec.caption, rec.n, b.sampling_steps, false, seed, rec.fps)?)
                        } else {
                            None
                        };
                        Ok((gen, endpoint))
                    })
            }
            (None, BenchSource::ClipDir(dir)) => read_clip(&dir.join(format!("{}.clip", rec.clip_id))).map(|(_, mut c)| {
                c.caption = rec.caption.clone();
                (c, None)
            }),
            (None, BenchSource::Checkpoint(_)) => unreachable!("generator is loaded for checkpoints"),
        };
        match made {
            Ok((generated, endpoint_sample)) => items.push(BenchItem {
                clip_id: rec.clip_id.clone(),
                scale: rec.scale_s,
                reference,
                generated,
                endpoint_sample,
            }),
            Err(e) => {
                log::warn!("clip {} could not be generated: {e}", rec.clip_id);
                failures += 1;
            }
        }
    }
    Ok((items, failures))
}

/// Writes CSV, per-clip CSV, markdown, JSON, and optionally bar charts.
pub fn write_report(report: &BenchReport, out: &Path, charts: bool) -> Result<Vec<String>> {
    std::fs::create_dir_all(out).map_err(|e| SemfiError::io(out, e))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| SemfiError::io(&p, e))
    };
    write(REPORT_CSV, report.to_csv())?;
    write(PER_CLIP_CSV, report.per_clip_csv())?;
    write(REPORT_MD, report.to_markdown())?;
    write(REPORT_JSON, serde_json::to_string_pretty(report)?)?;
    let mut files = vec![REPORT_CSV.into(), PER_CLIP_CSV.into(), REPORT_MD.into(), REPORT_JSON.into()];
    if charts {
        report.write_bar_charts(&out.join("charts"))?;
        files.push("charts/".into());
    }
    Ok(files)
}

/// Scores a checkpoint or a directory of generated clips on the test split.
pub fn cmd_bench(cfg: &ExperimentConfig, source: &BenchSource, data_dir: &Path, out: &Path) -> Result<BenchReport> {
    cfg.validate()?;
    let (items, failures) = bench_items(cfg, source, data_dir)?;
    let m = &cfg.model;
    let ctx = BenchContext::new(&cfg.bench, m.height, m.width, m.channels)?;
    let report = bench_run(&items, &cfg.data.scales, &ctx, failures)?;
    let files = write_report(&report, out, cfg.bench.charts)?;
    let mut record = RunRecord::new("bench", cfg.hash(), cfg.bench.seed).input("manifest", &data_dir.join(MANIFEST_FILE))?;
    record = match source {
        BenchSource::Checkpoint(p) => record.input("checkpoint", p)?,
        BenchSource::ClipDir(p) => record.input("clips", p)?,
    };
    record.outputs = files;
    record.write(out)?;
    Ok(report)
}

/// Re-renders a saved report.
pub fn cmd_report(report_json: &Path, out: &Path, charts: bool) -> Result<BenchReport> {
    let text = std::fs::read_to_string(report_json).map_err(|e| SemfiError::io(report_json, e))?;
    let report: BenchReport = serde_json::from_str(&text)
        .map_err(|e| SemfiError::format(report_json.display().to_string(), e.to_string()))?;
    let files = write_report(&report, out, charts)?;
    let mut record = RunRecord::new("report", String::new(), 0).input("report", report_json)?;
    record.outputs = files;
    record.write(out)?;
    Ok(report)
}
