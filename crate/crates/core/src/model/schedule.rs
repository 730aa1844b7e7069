use crate::error::{Result, SemfiError};

use super::config::DenoiserConfig;

/// Variance-preserving noise ladder with cumulative signal products.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas_cumprod: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear betas; the endpoints are rates per 1000 steps and get rescaled
    /// so shorter ladders still reach pure noise.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(SemfiError::Config("noise schedule needs at least 2 steps".into()));
        }
        let k = 1000.0 / steps as f64;
        let (b0, b1) = (beta_start * k, (beta_end * k).min(0.999));
        let betas: Vec<f64> = (0..steps)
            .map(|i| b0 + (b1 - b0) * i as f64 / (steps - 1) as f64)
            .collect();
        let mut acc = 1.0;
        let alphas_cumprod = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(NoiseSchedule { betas, alphas_cumprod })
    }

    pub fn from_config(cfg: &DenoiserConfig) -> Result<Self> {
        Self::linear(cfg.noise_steps, cfg.beta_start, cfg.beta_end)
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(SemfiError::Range(format!(
                "timestep {t} outside [0, {})",
                self.len()
            )));
        }
        Ok(())
    }

    /// `sqrt(alpha_bar_t)`.
    pub fn signal(&self, t: usize) -> f64 {
        self.alphas_cumprod[t].sqrt()
    }

    /// `sqrt(1 - alpha_bar_t)`.
    pub fn noise(&self, t: usize) -> f64 {
        (1.0 - self.alphas_cumprod[t]).sqrt()
    }

    pub fn add_noise(&self, x0: f64, eps: f64, t: usize) -> f64 {
        self.signal(t) * x0 + self.noise(t) * eps
    }

    pub fn x0_from_eps(&self, xt: f64, eps: f64, t: usize) -> f64 {
        (xt - self.noise(t) * eps) / self.signal(t)
    }

    /// Evenly spaced subset of timesteps, ascending, always containing 0 and the last step.
    pub fn respaced(&self, count: usize) -> Result<Vec<usize>> {
        if count == 0 || count > self.len() {
            return Err(SemfiError::Argument(format!(
                "sampling steps must be in [1, {}], got {count}",
                self.len()
            )));
        }
        if count == 1 {
            return Ok(vec![self.len() - 1]);
        }
        let last = (self.len() - 1) as f64;
        let mut ts: Vec<usize> = (0..count)
            .map(|i| (i as f64 * last / (count - 1) as f64).round() as usize)
            .collect();
        ts.dedup();
        Ok(ts)
    }
}
