use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};

/// What the denoiser's output regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTarget {
    #[default]
    Epsilon,
    Velocity,
}

/// Architecture and diffusion settings of the video denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    /// Pixel height of the clips the model works on.
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Spatial average-pool factor between pixels and latents (1 = pixel space).
    pub latent_pool: usize,
    /// Patch extent along (frames, rows, cols) of the latent.
    pub patch_size: [usize; 3],
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub d_text: usize,
    pub text_buckets: usize,
    pub text_seed: u64,
    pub image_encoder_seed: u64,
    pub max_frames: usize,
    pub noise_steps: usize,
    /// Linear beta ladder endpoints, expressed per 1000 steps.
    pub beta_start: f64,
    pub beta_end: f64,
    pub prediction_target: PredictionTarget,
    /// Data standard deviation assumed by the velocity target; 1.0 gives the
    /// plain `a·eps - s·x0` velocity.
    pub sigma_data: f64,
    /// Classifier-free guidance scale; 1.0 disables the unconditional pass.
    pub cfg_scale: f64,
    pub init_seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            height: 32,
            width: 32,
            channels: 3,
            latent_pool: 1,
            patch_size: [1, 8, 8],
            embed_dim: 32,
            num_layers: 2,
            num_heads: 4,
            mlp_ratio: 4,
            d_text: 32,
            text_buckets: 512,
            text_seed: 17,
            image_encoder_seed: 23,
            max_frames: 128,
            noise_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.03,
            prediction_target: PredictionTarget::Epsilon,
            sigma_data: 1.0,
            cfg_scale: 1.0,
            init_seed: 0,
        }
    }
}

impl DenoiserConfig {
    /// `(c_skip, c_out)` with `x0 = c_skip·x_t - c_out·v` for signal `a` and noise `s`.
    pub fn velocity_coefficients(&self, a: f64, s: f64) -> (f64, f64) {
        let sd2 = self.sigma_data * self.sigma_data;
        let d = a * a * sd2 + s * s;
        (a * sd2 / d, s * self.sigma_data / d.sqrt())
    }

    pub fn latent_dims(&self) -> (usize, usize, usize) {
        (self.height / self.latent_pool, self.width / self.latent_pool, self.channels)
    }

    /// Channels of the assembled model input: noisy latent, guidance frames, mask.
    pub fn input_channels(&self) -> usize {
        2 * self.channels + 1
    }

    pub fn patch_volume(&self) -> usize {
        self.patch_size.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(SemfiError::Config(m));
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return cfg("height, width and channels must be positive".into());
        }
        if self.latent_pool == 0 || self.height % self.latent_pool != 0 || self.width % self.latent_pool != 0 {
            return cfg(format!(
                "latent_pool {} must divide height {} and width {}",
                self.latent_pool, self.height, self.width
            ));
        }
        if self.patch_size.iter().any(|&p| p == 0) {
            return cfg("patch dimensions must be positive".into());
        }
        let (lh, lw, _) = self.latent_dims();
        if lh % self.patch_size[1] != 0 {
            return cfg(format!("patch height {} does not divide latent height {lh}", self.patch_size[1]));
        }
        if lw % self.patch_size[2] != 0 {
            return cfg(format!("patch width {} does not divide latent width {lw}", self.patch_size[2]));
        }
        if self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return cfg(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.embed_dim % 8 != 0 {
            return cfg(format!("embed_dim {} must be a multiple of 8", self.embed_dim));
        }
        if self.max_frames < 81 {
            return cfg(format!("max_frames {} must be at least 81", self.max_frames));
        }
        if self.noise_steps < 2 {
            return cfg("noise_steps must be at least 2".into());
        }
        if !(self.beta_start > 0.0 && self.beta_start < self.beta_end) {
            return cfg("beta ladder must satisfy 0 < beta_start < beta_end".into());
        }
        if !(self.sigma_data > 0.0 && self.sigma_data.is_finite()) {
            return cfg(format!("sigma_data {} must be positive", self.sigma_data));
        }
        if self.d_text == 0 || self.text_buckets == 0 || self.mlp_ratio == 0 {
            return cfg("d_text, text_buckets and mlp_ratio must be positive".into());
        }
        Ok(())
    }

    /// Checks that a clip of `n` frames tiles into patches.
    pub fn check_frames(&self, n: usize) -> Result<()> {
        if n % self.patch_size[0] != 0 {
            return Err(SemfiError::Config(format!(
                "patch frames {} does not divide N = {n}",
                self.patch_size[0]
            )));
        }
        if n > self.max_frames {
            return Err(SemfiError::Config(format!("N = {n} exceeds max_frames {}", self.max_frames)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        DenoiserConfig::default().validate().unwrap();
    }

    #[test]
    fn heads_must_divide_width() {
        let c = DenoiserConfig {
            num_heads: 3,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn patch_error_names_axis() {
        let c = DenoiserConfig {
            patch_size: [1, 5, 8],
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("height"), "{msg}");
    }
}
