//! The training command: optional base pretraining, then adapter training.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{GuidancePack, ImageEncoder, RandomProjectionEncoder};
use crate::data::manifest::{check_manifest, read_manifest, ManifestRecord, Split};
use crate::data::MANIFEST_FILE;
use crate::error::{Result, SemfiError};
use crate::model::{
    training_step, AdamW, Checkpoint, Denoiser, LatentCodec, NoiseSchedule, TextEncoder, TrainExample, TrainableSet,
};
use crate::mol::MoLState;
use crate::rng::SeedStream;

use super::config::{ExperimentConfig, TrainMode, SINGLE_SCALE};
use super::record::RunRecord;

pub const CHECKPOINT_FILE: &str = "checkpoint.semfi";
pub const LOSS_LOG_FILE: &str = "loss.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Adapter,
    Joint,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Adapter => "adapter",
            Phase::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub step: usize,
    pub phase: Phase,
    pub scale: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub losses: Vec<LossEntry>,
}

/// Trailing moving average; the first `window - 1` entries average what is available.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Train clips grouped by frame count, restricted to the scales the config trains on.
pub fn training_groups(cfg: &ExperimentConfig, records: &[ManifestRecord], adapter_phase: bool) -> Result<BTreeMap<usize, Vec<ManifestRecord>>> {
    let wanted: Vec<usize> = if adapter_phase && !cfg.mol.multi_frame_training {
        vec![SINGLE_SCALE]
    } else {
        cfg.mol.scales.clone()
    };
    let mut groups: BTreeMap<usize, Vec<ManifestRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.split == Split::Train && wanted.contains(&r.scale_s)) {
        groups.entry(r.scale_s).or_default().push(r.clone());
    }
    for s in &wanted {
        if !groups.contains_key(s) {
            return Err(SemfiError::Data(format!("manifest has no training clips at scale {s}")));
        }
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    }
    Ok(groups)
}

struct Batcher<'a> {
    root: &'a Path,
    groups: &'a BTreeMap<usize, Vec<ManifestRecord>>,
    batch_size: usize,
    codec: LatentCodec,
    text: TextEncoder,
    image: RandomProjectionEncoder,
}

impl<'a> Batcher<'a> {
    fn new(cfg: &ExperimentConfig, root: &'a Path, groups: &'a BTreeMap<usize, Vec<ManifestRecord>>) -> Self {
        Batcher {
            root,
            groups,
            batch_size: cfg.train.batch_size,
            codec: LatentCodec::new(cfg.model.latent_pool),
            text: TextEncoder::new(cfg.model.text_buckets, cfg.model.d_text, cfg.model.text_seed),
            image: image_encoder(cfg),
        }
    }

    /// One single-scale batch: a uniformly drawn scale, clips drawn without replacement.
    fn draw(&self, seed: SeedStream, first_frame_only: bool) -> Result<(usize, Vec<TrainExample>)> {
        let mut rng = seed.rng();
        let scales: Vec<usize> = self.groups.keys().copied().collect();
        let s = scales[rng.gen_range(0..scales.len())];
        let group = &self.groups[&s];
        let k = self.batch_size.min(group.len());
        let mut picks = sample_indices(&mut rng, group.len(), k).into_vec();
        picks.sort_unstable();
        let mut batch = Vec::with_capacity(k);
        for i in picks {
            let rec = &group[i];
            let clip = rec.load(self.root)?;
            let (first, last) = (clip.first(), clip.last());
            let pack = if first_frame_only {
                GuidancePack::first_frame_only(&first, clip.n_frames, &self.codec, &self.image)?
            } else {
                GuidancePack::dual_endpoint(&first, &last, clip.n_frames, &self.codec, &self.image)?
            };
            batch.push(TrainExample {
                x0: self.codec.encode_clip(&clip),
                text: self.text.encode(&clip.caption),
                pack,
            });
        }
        Ok((s, batch))
    }
}

pub fn image_encoder(cfg: &ExperimentConfig) -> RandomProjectionEncoder {
    RandomProjectionEncoder::new(cfg.model.d_text, cfg.model.image_encoder_seed)
}

fn steps_for(cfg: &ExperimentConfig, groups: &BTreeMap<usize, Vec<ManifestRecord>>) -> usize {
    if cfg.train.epochs == 0 {
        return cfg.train.steps;
    }
    let clips: usize = groups.values().map(Vec::len).sum();
    cfg.train.epochs * clips.div_ceil(cfg.train.batch_size)
}

/// Trains from the manifest under `data_dir` and writes a checkpoint, loss log, and run record to `out`.
pub fn cmd_train(cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest_path = data_dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(SemfiError::Data(format!("no manifest at {}", manifest_path.display())));
    }
    let records = read_manifest(&manifest_path)?;
    check_manifest(&records, data_dir)?;
    let adapter_groups = training_groups(cfg, &records, true)?;
    std::fs::create_dir_all(out).map_err(|e| SemfiError::io(out, e))?;

    let root = SeedStream::new(cfg.train.seed);
    let schedule = NoiseSchedule::from_config(&cfg.model)?;
    let mut model = Denoiser::<f32>::new(cfg.model.clone(), root.derive("model"))?;
    let mut mol = MoLState::<f32>::new(&model.lora_layer_shapes(), &cfg.mol, root.derive("mol"))?;
    let mut losses = Vec::new();

    if cfg.train.mode == TrainMode::Staged && cfg.train.pretrain_steps > 0 {
        // The base stands in for a pretrained backbone, so it sees every scale regardless of the adapter setup.
        let all = training_groups(cfg, &records, false)?;
        let batcher = Batcher::new(cfg, data_dir, &all);
        let mut opt = AdamW::new(cfg.train.pretrain_lr, cfg.train.weight_decay);
        for step in 0..cfg.train.pretrain_steps {
            let seed = root.derive("pretrain").index(step as u64);
            let (s, batch) = batcher.draw(seed.derive("batch"), true)?;
            let loss = training_step(&mut model, None, &batch, TrainableSet::BASE, &mut opt, &schedule, seed.derive("noise"))?;
            if step % 100 == 0 {
                log::info!("pretrain step {step} scale {s} loss {loss:.5}");
            }
            losses.push(LossEntry {
                step: losses.len(),
                phase: Phase::Pretrain,
                scale: s,
                loss,
            });
        }
    }

    let (phase, trainable) = match cfg.train.mode {
        TrainMode::Staged => (Phase::Adapter, TrainableSet::ADAPTERS),
        TrainMode::Scratch => (Phase::Joint, TrainableSet::ALL),
    };
    let batcher = Batcher::new(cfg, data_dir, &adapter_groups);
    let mut opt = AdamW::new(cfg.train.lr, cfg.train.weight_decay);
    for step in 0..steps_for(cfg, &adapter_groups) {
        let seed = root.derive("adapter").index(step as u64);
        let (s, batch) = batcher.draw(seed.derive("batch"), false)?;
        let loss = training_step(&mut model, Some(&mut mol), &batch, trainable, &mut opt, &schedule, seed.derive("noise"))?;
        if step % 100 == 0 {
            log::info!("{} step {step} scale {s} loss {loss:.5}", phase.name());
        }
        losses.push(LossEntry {
            step: losses.len(),
            phase,
            scale: s,
            loss,
        });
    }

    let curve = smoothed(&losses.iter().map(|l| l.loss).collect::<Vec<_>>(), cfg.train.smoothing_window);
    let ckpt = Checkpoint {
        model,
        mol: Some((cfg.mol.clone(), mol)),
        extra: serde_json::json!({
            "config_hash": cfg.hash(),
            "steps": losses.len(),
            "final_smoothed_loss": curve.last(),
        }),
    };
    let ckpt_path = out.join(CHECKPOINT_FILE);
    ckpt.save(&ckpt_path)?;
    write_loss_log(&out.join(LOSS_LOG_FILE), &losses, &curve)?;
    cfg.save(&out.join("config.json"))?;
    let mut record = RunRecord::new("train", cfg.hash(), cfg.train.seed).input("manifest", &manifest_path)?;
    record.outputs = vec![CHECKPOINT_FILE.into(), LOSS_LOG_FILE.into(), "config.json".into()];
    record.write(out)?;
    Ok(TrainOutcome {
        checkpoint: ckpt_path,
        losses,
    })
}

fn write_loss_log(path: &Path, losses: &[LossEntry], curve: &[f64]) -> Result<()> {
    let mut buf = Vec::new();
    let io = |e| SemfiError::io(path, e);
    writeln!(buf, "step,phase,scale,loss,smoothed").map_err(io)?;
    for (l, s) in losses.iter().zip(curve) {
        writeln!(buf, "{},{},{},{:.6},{:.6}", l.step, l.phase.name(), l.scale, l.loss, s).map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

/// Reads `loss` values back from a loss log.
pub fn read_loss_log(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| SemfiError::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .nth(3)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| SemfiError::format(path.display().to_string(), format!("bad loss line {l:?}")))
        })
        .collect()
}

/// Loads a checkpoint and returns it with the image encoder the config implies.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Box<dyn ImageEncoder>)> {
    let ckpt = Checkpoint::load(path)?;
    let enc = RandomProjectionEncoder::new(ckpt.model.config.d_text, ckpt.model.config.image_encoder_seed);
    Ok((ckpt, Box::new(enc)))
}
