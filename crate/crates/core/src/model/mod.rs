//! The conditional video denoiser: configuration, noise schedule, latent
//! handling, text encoding, training, sampling, and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod denoiser;
pub mod latent;
pub mod params;
pub mod sample;
pub mod schedule;
pub mod text;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{DenoiserConfig, PredictionTarget};
pub use denoiser::{Denoiser, TrainableSet};
pub use latent::{patchify, unpatchify, LatentCodec, PatchGrid, Volume};
pub use params::ParamStore;
pub use sample::{sample, SampleRequest};
pub use schedule::NoiseSchedule;
pub use text::{TextEmbedding, TextEncoder};
pub use train::{loss_and_grads, training_step, AdamW, TrainExample};
