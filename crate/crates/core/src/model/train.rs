//! Diffusion training: noise a clean latent, regress the target, step AdamW.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conditioning::GuidancePack;
use crate::error::{Result, SemfiError};
use crate::mol::MoLState;
use crate::nn::{Graph, Real, Tensor};
use crate::rng::SeedStream;

use super::config::PredictionTarget;
use super::denoiser::{Denoiser, TrainableSet};
use super::latent::{patchify, Volume};
use super::schedule::NoiseSchedule;
use super::text::TextEmbedding;

/// A clean latent with its conditioning.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub x0: Volume,
    pub text: TextEmbedding,
    pub pack: GuidancePack,
}

pub type Gradients<T> = BTreeMap<String, Tensor<T>>;

/// Noise draw for one example: timestep and per-element epsilon.
pub fn draw_noise(seed: SeedStream, len: usize, steps: usize) -> (usize, Vec<f32>) {
    let mut rng = seed.rng();
    let t = rng.gen_range(0..steps);
    let eps = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    (t, eps)
}

/// Shared frame count of a batch; mixed counts are rejected.
pub fn batch_frames(batch: &[TrainExample]) -> Result<usize> {
    let n = batch
        .first()
        .ok_or_else(|| SemfiError::Batching("empty batch".into()))?
        .x0
        .n;
    if let Some(bad) = batch.iter().find(|e| e.x0.n != n) {
        return Err(SemfiError::Batching(format!(
            "batch mixes frame counts {n} and {}; one expert is routed per batch",
            bad.x0.n
        )));
    }
    Ok(n)
}

/// Mean loss over the batch and its gradient for every trainable tensor.
///
/// Example `i` draws its timestep and noise from `seed.index(i)`.
pub fn loss_and_grads<T: Real>(
    model: &Denoiser<T>,
    mol: Option<&MoLState<T>>,
    batch: &[TrainExample],
    trainable: TrainableSet,
    schedule: &NoiseSchedule,
    seed: SeedStream,
) -> Result<(f64, Gradients<T>)> {
    let n = batch_frames(batch)?;
    let active = mol.map(|m| m.active(n)).transpose()?;
    let inv_b = T::of(1.0 / batch.len() as f64);
    let mut grads: Gradients<T> = BTreeMap::new();
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let (t, eps) = draw_noise(seed.index(i as u64), ex.x0.data.len(), schedule.len());
        let (a, s) = (schedule.signal(t), schedule.noise(t));
        let (c_skip, c_out) = model.config.velocity_coefficients(a, s);
        let mut noisy = ex.x0.clone();
        let mut target = ex.x0.clone();
        for ((xt, tg), (&x0, &e)) in noisy
            .data
            .iter_mut()
            .zip(target.data.iter_mut())
            .zip(ex.x0.data.iter().zip(&eps))
        {
            let (x0, e) = (f64::from(x0), f64::from(e));
            let x = a * x0 + s * e;
            *xt = x as f32;
            *tg = match model.config.prediction_target {
                PredictionTarget::Epsilon => e,
                PredictionTarget::Velocity => (c_skip * x - x0) / c_out,
            } as f32;
        }
        let prepared = model.prepare(&noisy, t, schedule, &ex.text, &ex.pack, n)?;
        let mut g = Graph::new();
        let binding = model.bind(&mut g, active, trainable);
        let pred = model.forward_graph(&mut g, &binding, &prepared);
        let target = g.input(patchify::<T>(&target, model.config.patch_size)?);
        let loss = g.mse(pred, target);
        let lv = g.scalar(loss).to_f64().unwrap_or(f64::NAN);
        if !lv.is_finite() {
            return Err(SemfiError::Range(format!("non-finite training loss at example {i}")));
        }
        total += lv;
        g.backward(loss);
        for (name, var) in &binding.trainable {
            if let Some(gr) = g.grad(*var) {
                let gr = gr.scaled(inv_b);
                match grads.get_mut(name) {
                    Some(acc) => acc.add_assign(&gr),
                    None => {
                        grads.insert(name.clone(), gr);
                    }
                }
            }
        }
    }
    Ok((total / batch.len() as f64, grads))
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

/// AdamW with per-tensor step counts, so tensors that sit out a step keep
/// their state untouched.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub max_grad_norm: Option<f64>,
    state: HashMap<String, Moments<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            max_grad_norm: Some(1.0),
            state: HashMap::new(),
        }
    }

    /// Global-norm clipping factor for a set of gradients.
    pub fn clip_factor(&self, grads: &Gradients<T>) -> f64 {
        let norm = grads
            .values()
            .flat_map(|g| g.data.iter())
            .map(|v| {
                let v = v.to_f64().unwrap_or(0.0);
                v * v
            })
            .sum::<f64>()
            .sqrt();
        match self.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        }
    }

    /// Updates one tensor in place.
    pub fn update(&mut self, name: &str, grad: &Tensor<T>, param: &mut Tensor<T>, clip: f64) -> Result<()> {
        if grad.shape() != param.shape() {
            return Err(SemfiError::Shape(format!(
                "gradient {:?} does not match parameter {name} {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
            m: vec![T::zero(); grad.data.len()],
            v: vec![T::zero(); grad.data.len()],
            t: 0,
        });
        st.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(st.t));
        let c2 = T::of(1.0 - self.beta2.powi(st.t));
        let lr = T::of(self.lr);
        let decay = T::of(1.0 - self.lr * self.weight_decay);
        let clip = T::of(clip);
        let eps = T::of(self.eps);
        for (((w, &gr), m), v) in param.data.iter_mut().zip(&grad.data).zip(st.m.iter_mut()).zip(st.v.iter_mut()) {
            let gr = gr * clip;
            *m = b1 * *m + (T::one() - b1) * gr;
            *v = b2 * *v + (T::one() - b2) * gr * gr;
            let mh = *m / c1;
            let vh = *v / c2;
            *w = *w * decay - lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// Computes gradients for the trainable set and applies one optimizer step.
/// Returns the batch loss.
pub fn training_step<T: Real>(
    model: &mut Denoiser<T>,
    mut mol: Option<&mut MoLState<T>>,
    batch: &[TrainExample],
    trainable: TrainableSet,
    optimizer: &mut AdamW<T>,
    schedule: &NoiseSchedule,
    seed: SeedStream,
) -> Result<f64> {
    let (loss, grads) = loss_and_grads(model, mol.as_deref(), batch, trainable, schedule, seed)?;
    if let Some(m) = mol.as_deref() {
        let allowed = m.trainable_parameters(batch_frames(batch)?)?;
        if let Some(bad) = grads.keys().find(|k| k.starts_with("mol/") && !allowed.contains(*k)) {
            return Err(SemfiError::Config(format!("gradient reached inactive adapter tensor {bad}")));
        }
    }
    let clip = optimizer.clip_factor(&grads);
    for (name, g) in &grads {
        let param = if name.starts_with("mol/") {
            mol.as_deref_mut().and_then(|m| m.tensor_mut(name))
        } else {
            model.params.get_mut(name)
        }
        .ok_or_else(|| SemfiError::Config(format!("gradient for unknown parameter {name}")))?;
        optimizer.update(name, g, param, clip)?;
    }
    Ok(loss)
}
