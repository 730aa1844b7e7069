use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataConfig;
use crate::error::{Result, SemfiError};
use crate::model::{DenoiserConfig, PredictionTarget};
use crate::mol::MolConfig;
use crate::sfibench::BenchConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Frame count used when multi-frame training is switched off.
pub const SINGLE_SCALE: usize = 65;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Pretrain the base on first-frame conditioning, freeze it, then train adapters.
    #[default]
    Staged,
    /// Train base and adapters jointly from the start.
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Base-model steps before the adapter phase (staged mode only).
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub steps: usize,
    /// When non-zero, overrides `steps` with this many passes over the training clips.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Trailing window of the smoothed loss curve.
    pub smoothing_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Staged,
            pretrain_steps: 800,
            pretrain_lr: 2e-3,
            steps: 1200,
            epochs: 0,
            batch_size: 8,
            lr: 1e-4,
            weight_decay: 0.0,
            seed: 0,
            smoothing_window: 100,
        }
    }
}

/// Everything one experiment needs; serialized as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: DenoiserConfig,
    pub mol: MolConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            // A small patch embedding cannot pass noise through per pixel, so the target is
            // velocity preconditioned on the spread of the synthetic frames.
            model: DenoiserConfig {
                prediction_target: PredictionTarget::Velocity,
                sigma_data: 0.35,
                ..DenoiserConfig::default()
            },
            mol: MolConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// A few-minute configuration for smoke runs and tests: 16×16 frames, short schedules.
    pub fn tiny() -> Self {
        let mut c = ExperimentConfig::default();
        c.model.height = 16;
        c.model.width = 16;
        c.model.patch_size = [1, 8, 8];
        c.model.embed_dim = 16;
        c.model.num_layers = 1;
        c.model.num_heads = 2;
        c.model.mlp_ratio = 2;
        c.model.d_text = 16;
        c.model.text_buckets = 128;
        c.model.noise_steps = 100;
        c.mol.rank = 2;
        c.mol.alpha = 2.0;
        c.data.synth.num_videos = 12;
        c.data.synth.height = 16;
        c.data.synth.width = 16;
        c.data.test_videos = 2;
        c.train.pretrain_steps = 4;
        c.train.steps = 6;
        c.train.batch_size = 2;
        c.train.smoothing_window = 3;
        c.bench.sampling_steps = 3;
        c.bench.probe_videos = 30;
        c.bench.probe_frames = 9;
        c.bench.test_videos = 2;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SemfiError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.model.validate()?;
        self.mol.validate()?;
        self.data.validate()?;
        let s = &self.data.synth;
        if (s.height, s.width, s.channels) != (self.model.height, self.model.width, self.model.channels) {
            return bad(format!(
                "data frames are {}x{}x{} but the model expects {}x{}x{}",
                s.height, s.width, s.channels, self.model.height, self.model.width, self.model.channels
            ));
        }
        for &n in self.mol.scales.iter().chain(&self.data.scales) {
            self.model.check_frames(n)?;
        }
        if !self.mol.multi_frame_training && !self.mol.scales.contains(&SINGLE_SCALE) {
            return bad(format!("single-scale training needs {SINGLE_SCALE} in mol.scales"));
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return bad("train.batch_size must be positive".into());
        }
        if !(t.lr > 0.0 && t.pretrain_lr > 0.0) || t.weight_decay < 0.0 {
            return bad("learning rates must be positive and weight decay non-negative".into());
        }
        if t.smoothing_window == 0 {
            return bad("train.smoothing_window must be positive".into());
        }
        if self.bench.sampling_steps == 0 || self.bench.sampling_steps > self.model.noise_steps {
            return bad(format!(
                "bench.sampling_steps must be in 1..={}",
                self.model.noise_steps
            ));
        }
        Ok(())
    }

    /// Parses and validates; the schema field must be present.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SemfiError::Config(format!("config is not JSON: {e}")))?;
        if value.get("schema_version").is_none() {
            return Err(SemfiError::Config("config lacks schema_version".into()));
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| SemfiError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SemfiError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| SemfiError::io(path, e))
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
