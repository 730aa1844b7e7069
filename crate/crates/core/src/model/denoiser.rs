//! Toy video diffusion transformer.
//!
//! Tokens are latent patches of the channel-concatenated model input
//! (noisy latent, guidance frames, mask). Each block runs spatial attention
//! within a frame slab, temporal attention across slabs at a fixed spatial
//! location, and an MLP, each wrapped in adaptive layer norm driven by the
//! timestep, pooled text, and the summed endpoint image embedding.

use std::collections::HashMap;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use crate::conditioning::{assemble_model_input, GuidancePack};
use crate::error::{Result, SemfiError};
use crate::mol::{ActiveAdapters, LayerShape, MoLState};
use crate::nn::{Graph, Real, Tensor, TokenGroup, Var};
use crate::rng::SeedStream;

use super::config::DenoiserConfig;
use super::latent::{patchify, unpatchify, PatchGrid, Volume};
use super::params::ParamStore;
use super::schedule::NoiseSchedule;
use super::text::TextEmbedding;

/// Sublayers of a block that adapters attach to.
pub const ADAPTED_SUFFIXES: [&str; 10] = [
    "spatial.q",
    "spatial.k",
    "spatial.v",
    "spatial.o",
    "temporal.q",
    "temporal.k",
    "temporal.v",
    "temporal.o",
    "mlp.fc1",
    "mlp.fc2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<T> {
    pub config: DenoiserConfig,
    pub params: ParamStore<T>,
}

/// Which parameter groups receive gradients in a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainableSet {
    pub base: bool,
    pub adapters: bool,
}

impl TrainableSet {
    pub const NONE: TrainableSet = TrainableSet { base: false, adapters: false };
    pub const ADAPTERS: TrainableSet = TrainableSet { base: false, adapters: true };
    pub const BASE: TrainableSet = TrainableSet { base: true, adapters: false };
    pub const ALL: TrainableSet = TrainableSet { base: true, adapters: true };
}

/// Graph handles for one forward pass.
pub(crate) struct Binding<T> {
    base: HashMap<String, Var>,
    lora: Vec<(T, HashMap<String, (Var, Var)>)>,
    /// `(checkpoint name, var)` for every trainable leaf.
    pub trainable: Vec<(String, Var)>,
}

/// Constant per-call inputs of the graph.
pub(crate) struct Prepared<T> {
    pub tokens: Tensor<T>,
    pub pos: Tensor<T>,
    pub temb: Tensor<T>,
    pub text: Tensor<T>,
    pub cond: Tensor<T>,
    pub spatial: Arc<[TokenGroup]>,
    pub temporal: Arc<[TokenGroup]>,
    pub dims: [usize; 4],
}

fn sinusoid(pos: f64, dim: usize, max_period: f64, out: &mut [f64]) {
    let half = dim / 2;
    for k in 0..half {
        let freq = (-(max_period.ln()) * k as f64 / half as f64).exp();
        out[k] = (pos * freq).sin();
        out[half + k] = (pos * freq).cos();
    }
}

impl<T: Real> Denoiser<T> {
    /// Randomly initialized model. Output projection and all modulation
    /// layers start at zero, so the initial prediction is exactly zero.
    pub fn new(config: DenoiserConfig, seed: SeedStream) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, rows, cols, init) in Self::layout(&config) {
            let w = match init {
                Init::Zero => Tensor::zeros(rows, cols),
                Init::FanIn => {
                    let std = 1.0 / (cols as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("std");
                    let mut rng = seed.derive(&name).rng();
                    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| T::of(normal.sample(&mut rng))).collect())
                }
            };
            params.insert(name, w);
        }
        Ok(Denoiser { config, params })
    }

    /// Every parameter exactly zero.
    pub fn zeroed(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, rows, cols, _) in Self::layout(&config) {
            params.insert(name, Tensor::zeros(rows, cols));
        }
        Ok(Denoiser { config, params })
    }

    fn layout(c: &DenoiserConfig) -> Vec<(String, usize, usize, Init)> {
        let d = c.embed_dim;
        let hid = d * c.mlp_ratio;
        let pin = c.patch_volume() * c.input_channels();
        let pout = c.patch_volume() * c.channels;
        let mut out = Vec::new();
        let mut lin = |name: &str, o: usize, i: usize, init: Init| {
            out.push((format!("{name}.weight"), o, i, init));
            out.push((format!("{name}.bias"), 1, o, Init::Zero));
        };
        lin("patch_embed", d, pin, Init::FanIn);
        lin("time_mlp.0", d, d, Init::FanIn);
        lin("time_mlp.2", d, d, Init::FanIn);
        lin("text_proj", d, c.d_text, Init::FanIn);
        lin("cond_proj", d, c.d_text, Init::FanIn);
        for b in 0..c.num_layers {
            lin(&format!("blocks.{b}.modulation"), 9 * d, d, Init::Zero);
            for s in ADAPTED_SUFFIXES {
                let (o, i) = match s {
                    "mlp.fc1" => (hid, d),
                    "mlp.fc2" => (d, hid),
                    _ => (d, d),
                };
                lin(&format!("blocks.{b}.{s}"), o, i, Init::FanIn);
            }
        }
        lin("final.modulation", 2 * d, d, Init::Zero);
        lin("final.proj", pout, d, Init::Zero);
        out
    }

    /// Layers the mixture-of-LoRA adapters cover.
    pub fn lora_layer_shapes(&self) -> Vec<LayerShape> {
        lora_layer_shapes(&self.config)
    }

    pub fn cast<U: Real>(&self) -> Denoiser<U> {
        Denoiser {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Builds the constant inputs for a forward pass.
    pub(crate) fn prepare(
        &self,
        noisy: &Volume,
        timestep: usize,
        schedule: &NoiseSchedule,
        text: &TextEmbedding,
        pack: &GuidancePack,
        target_n: usize,
    ) -> Result<Prepared<T>> {
        let c = &self.config;
        schedule.check_timestep(timestep)?;
        let (lh, lw, ch) = c.latent_dims();
        if [noisy.h, noisy.w, noisy.c] != [lh, lw, ch] {
            return Err(SemfiError::Shape(format!(
                "noisy latent {:?} does not match model latent {lh}x{lw}x{ch}",
                noisy.dims()
            )));
        }
        if target_n != noisy.n {
            return Err(SemfiError::Argument(format!(
                "target N = {target_n} but latent has {} frames",
                noisy.n
            )));
        }
        c.check_frames(noisy.n)?;
        if pack.cond_embedding.len() != c.d_text {
            return Err(SemfiError::Shape(format!(
                "condition embedding has {} dims, expected {}",
                pack.cond_embedding.len(),
                c.d_text
            )));
        }
        let input = assemble_model_input(noisy, pack)?;
        let tokens = patchify::<T>(&input, c.patch_size)?;
        let grid = PatchGrid::new(input.dims(), c.patch_size)?;
        let d = c.embed_dim;

        let s_tok = grid.spatial_tokens();
        let nt = grid.counts[0];
        let spatial: Arc<[TokenGroup]> = (0..nt)
            .map(|f| TokenGroup { start: f * s_tok, len: s_tok, stride: 1 })
            .collect();
        let temporal: Arc<[TokenGroup]> = (0..s_tok)
            .map(|s| TokenGroup { start: s, len: nt, stride: s_tok })
            .collect();

        // Positional code: quarters for absolute slab, relative slab, row, column.
        let q = d / 4;
        let mut pos = Tensor::zeros(grid.num_tokens(), d);
        let mut buf = vec![0.0; q];
        let rel_den = (nt.max(2) - 1) as f64;
        for bt in 0..nt {
            for by in 0..grid.counts[1] {
                for bx in 0..grid.counts[2] {
                    let tok = (bt * grid.counts[1] + by) * grid.counts[2] + bx;
                    let row = &mut pos.data[tok * d..(tok + 1) * d];
                    let feats = [
                        (bt as f64, c.max_frames as f64),
                        (bt as f64 / rel_den * std::f64::consts::PI, 4.0),
                        (by as f64, 64.0),
                        (bx as f64, 64.0),
                    ];
                    for (k, (p, period)) in feats.into_iter().enumerate() {
                        sinusoid(p, q, period, &mut buf);
                        for (o, v) in row[k * q..(k + 1) * q].iter_mut().zip(&buf) {
                            *o = T::of(*v);
                        }
                    }
                }
            }
        }

        let mut temb = vec![0.0; d];
        sinusoid(timestep as f64, d, 10_000.0, &mut temb);
        let text = text.pooled(c.d_text);
        Ok(Prepared {
            tokens,
            pos,
            temb: Tensor::from_f64(1, d, &temb),
            text: Tensor::from_vec(1, c.d_text, text.iter().map(|&v| T::of(f64::from(v))).collect()),
            cond: Tensor::from_vec(
                1,
                c.d_text,
                pack.cond_embedding.iter().map(|&v| T::of(f64::from(v))).collect(),
            ),
            spatial,
            temporal,
            dims: [noisy.n, lh, lw, ch],
        })
    }

    pub(crate) fn bind(&self, g: &mut Graph<T>, active: Option<ActiveAdapters<'_, T>>, trainable: TrainableSet) -> Binding<T> {
        let mut base = HashMap::new();
        let mut tr = Vec::new();
        for (name, t) in self.params.iter() {
            let v = g.param(t.clone(), trainable.base);
            if trainable.base {
                tr.push((name.to_string(), v));
            }
            base.insert(name.to_string(), v);
        }
        let mut lora = Vec::new();
        if let Some(active) = active {
            let mut adapters = vec![(crate::mol::universal_prefix().to_string(), active.universal)];
            if let Some((s, e)) = active.expert {
                adapters.push((crate::mol::expert_prefix(s), e));
            }
            for (prefix, adapter) in adapters {
                let mut layers = HashMap::new();
                for (layer, l) in &adapter.layers {
                    let a = g.param(l.a.clone(), trainable.adapters);
                    let b = g.param(l.b.clone(), trainable.adapters);
                    if trainable.adapters {
                        tr.push((format!("{prefix}/{layer}/A"), a));
                        tr.push((format!("{prefix}/{layer}/B"), b));
                    }
                    layers.insert(layer.clone(), (a, b));
                }
                lora.push((adapter.scale(), layers));
            }
        }
        Binding { base, lora, trainable: tr }
    }

    fn linear(&self, g: &mut Graph<T>, b: &Binding<T>, x: Var, name: &str) -> Var {
        let w = b.base[&format!("{name}.weight")];
        let bias = b.base[&format!("{name}.bias")];
        let y = g.linear(x, w);
        let mut y = g.add_row(y, bias);
        for (scale, layers) in &b.lora {
            if let Some(&(a, bb)) = layers.get(name) {
                let t = g.linear(x, a);
                let u = g.linear(t, bb);
                let u = g.scale(u, *scale);
                y = g.add(y, u);
            }
        }
        y
    }

    /// `LN(x) * (1 + scale) + shift`.
    fn modulate(g: &mut Graph<T>, x: Var, shift: Var, scale: Var) -> Var {
        let n = g.layer_norm(x);
        let s = g.mul_row(n, scale);
        let y = g.add(n, s);
        g.add_row(y, shift)
    }

    fn attention(&self, g: &mut Graph<T>, b: &Binding<T>, x: Var, prefix: &str, groups: Arc<[TokenGroup]>) -> Var {
        let q = self.linear(g, b, x, &format!("{prefix}.q"));
        let k = self.linear(g, b, x, &format!("{prefix}.k"));
        let v = self.linear(g, b, x, &format!("{prefix}.v"));
        let a = g.attention(q, k, v, self.config.num_heads, groups);
        self.linear(g, b, a, &format!("{prefix}.o"))
    }

    /// Builds the forward pass; returns predicted patch rows `[L, patch·C]`.
    pub(crate) fn forward_graph(&self, g: &mut Graph<T>, b: &Binding<T>, p: &Prepared<T>) -> Var {
        let d = self.config.embed_dim;
        let tokens = g.input(p.tokens.clone());
        let pos = g.input(p.pos.clone());
        let h = self.linear(g, b, tokens, "patch_embed");
        let mut h = g.add(h, pos);

        let temb = g.input(p.temb.clone());
        let t = self.linear(g, b, temb, "time_mlp.0");
        let t = g.silu(t);
        let t = self.linear(g, b, t, "time_mlp.2");
        let text = g.input(p.text.clone());
        let text = self.linear(g, b, text, "text_proj");
        let cond = g.input(p.cond.clone());
        let cond = self.linear(g, b, cond, "cond_proj");
        let c = g.add(t, text);
        let c = g.add(c, cond);
        let c = g.silu(c);

        for blk in 0..self.config.num_layers {
            let m = self.linear(g, b, c, &format!("blocks.{blk}.modulation"));
            let part = |g: &mut Graph<T>, i: usize| g.slice_cols(m, i * d, d);
            let sublayers: [(usize, &str); 3] = [(0, "spatial"), (1, "temporal"), (2, "mlp")];
            for (i, kind) in sublayers {
                let (shift, scale, gate) = (part(g, 3 * i), part(g, 3 * i + 1), part(g, 3 * i + 2));
                let x = Self::modulate(g, h, shift, scale);
                let y = match kind {
                    "spatial" => self.attention(g, b, x, &format!("blocks.{blk}.spatial"), p.spatial.clone()),
                    "temporal" => self.attention(g, b, x, &format!("blocks.{blk}.temporal"), p.temporal.clone()),
                    _ => {
                        let u = self.linear(g, b, x, &format!("blocks.{blk}.mlp.fc1"));
                        let u = g.gelu(u);
                        self.linear(g, b, u, &format!("blocks.{blk}.mlp.fc2"))
                    }
                };
                let y = g.mul_row(y, gate);
                h = g.add(h, y);
            }
        }
        let m = self.linear(g, b, c, "final.modulation");
        let shift = g.slice_cols(m, 0, d);
        let scale = g.slice_cols(m, d, d);
        let x = Self::modulate(g, h, shift, scale);
        self.linear(g, b, x, "final.proj")
    }

    /// One denoiser evaluation. With `mol`, the universal adapter and the
    /// expert routed from `target_n` are applied on the unmerged path.
    pub fn forward(
        &self,
        noisy: &Volume,
        timestep: usize,
        schedule: &NoiseSchedule,
        text: &TextEmbedding,
        pack: &GuidancePack,
        mol: Option<&MoLState<T>>,
        target_n: usize,
    ) -> Result<Volume> {
        let prepared = self.prepare(noisy, timestep, schedule, text, pack, target_n)?;
        let active = mol.map(|m| m.active(target_n)).transpose()?;
        let mut g = Graph::inference();
        let b = self.bind(&mut g, active, TrainableSet::NONE);
        let out = self.forward_graph(&mut g, &b, &prepared);
        unpatchify(g.value(out), prepared.dims, self.config.patch_size)
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zero,
    FanIn,
}

pub fn lora_layer_shapes(c: &DenoiserConfig) -> Vec<LayerShape> {
    let d = c.embed_dim;
    let hid = d * c.mlp_ratio;
    let mut out = Vec::new();
    for b in 0..c.num_layers {
        for s in ADAPTED_SUFFIXES {
            let (d_out, d_in) = match s {
                "mlp.fc1" => (hid, d),
                "mlp.fc2" => (d, hid),
                _ => (d, d),
            };
            out.push(LayerShape {
                name: format!("blocks.{b}.{s}"),
                d_out,
                d_in,
            });
        }
    }
    out
}
