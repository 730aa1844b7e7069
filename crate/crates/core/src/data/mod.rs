//! Synthetic corpus generation and multi-scale curation.

pub mod caption;
pub mod clipfile;
pub mod curate;
pub mod manifest;
pub mod pipeline;
pub mod scores;
pub mod synth;

pub use clipfile::{read_clip, write_clip, ClipDtype, ClipHeader};
pub use curate::{cut_start, multi_scale_cut, ScoreThresholds, ThresholdConfig};
pub use manifest::{read_manifest, ManifestRecord, Split};
pub use pipeline::{run_all, run_stage, DataConfig, Stage, MANIFEST_FILE};
pub use scores::{clip_score, flow_score, FlowEstimator, FlowField, KnownFlow, PyramidFlow};
