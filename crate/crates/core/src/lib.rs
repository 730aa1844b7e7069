pub mod conditioning;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod mol;
pub mod nn;
pub mod rng;
pub mod sfibench;
pub mod video;

pub use error::{Result, SemfiError};
pub use video::{Frame, VideoClip};
