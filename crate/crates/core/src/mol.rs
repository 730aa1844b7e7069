//! Mixture-of-LoRA: an always-on universal adapter plus one expert per
//! target frame count, with the expert picked by nearest frame count.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::nn::{Real, Tensor};
use crate::rng::SeedStream;

/// Frame counts the experts specialize in.
pub const DEFAULT_SCALES: [usize; 6] = [5, 9, 17, 33, 65, 81];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MolConfig {
    pub rank: usize,
    pub alpha: f64,
    pub scales: Vec<usize>,
    /// When false only the universal adapter exists (single-LoRA ablation).
    pub enabled: bool,
    /// When false training only sees 65-frame clips.
    pub multi_frame_training: bool,
}

impl Default for MolConfig {
    fn default() -> Self {
        MolConfig {
            rank: 16,
            alpha: 16.0,
            scales: DEFAULT_SCALES.to_vec(),
            enabled: true,
            multi_frame_training: true,
        }
    }
}

impl MolConfig {
    pub fn validate(&self) -> Result<()> {
        validate_scales(&self.scales)?;
        if self.rank == 0 {
            return Err(SemfiError::Config("LoRA rank must be at least 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(SemfiError::Config("LoRA alpha must be positive".into()));
        }
        Ok(())
    }
}

pub fn validate_scales(scales: &[usize]) -> Result<()> {
    if scales.is_empty() {
        return Err(SemfiError::Config("expert frame-count set is empty".into()));
    }
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SemfiError::Config(format!(
            "expert frame-count set {scales:?} is not strictly increasing"
        )));
    }
    Ok(())
}

/// The element of `scales` nearest to `n`; ties go to the smaller frame count.
pub fn route(n: usize, scales: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for &s in scales {
        let d = n.abs_diff(s);
        match best {
            Some((bd, bs)) if d > bd || (d == bd && s >= bs) => {}
            _ => best = Some((d, s)),
        }
    }
    best.map(|(_, s)| s)
        .ok_or_else(|| SemfiError::Config("expert frame-count set is empty".into()))
}

/// Weight shape of a layer an adapter attaches to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub d_out: usize,
    pub d_in: usize,
}

/// `B·A` factor pair for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer<T> {
    /// `[rank, d_in]`
    pub a: Tensor<T>,
    /// `[d_out, rank]`
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T> {
    pub rank: usize,
    pub alpha: f64,
    pub layers: BTreeMap<String, LoraLayer<T>>,
}

impl<T: Real> LoraAdapter<T> {
    pub fn scale(&self) -> T {
        T::of(self.alpha / self.rank as f64)
    }

    /// `scale · B·A` for one layer.
    pub fn delta(&self, layer: &str) -> Option<Tensor<T>> {
        self.layers.get(layer).map(|l| l.b.matmul(&l.a).scaled(self.scale()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers.values().all(|l| l.b.data.iter().all(|v| *v == T::zero()))
    }
}

/// Gaussian A factors (std `1/rank`), zero B factors: a no-op at initialization.
pub fn init_adapter<T: Real>(shapes: &[LayerShape], rank: usize, alpha: f64, seed: SeedStream) -> Result<LoraAdapter<T>> {
    if rank == 0 {
        return Err(SemfiError::Config("LoRA rank must be at least 1".into()));
    }
    let normal = Normal::new(0.0, 1.0 / rank as f64).expect("valid std");
    let mut layers = BTreeMap::new();
    for s in shapes {
        if rank > s.d_in.min(s.d_out) {
            return Err(SemfiError::Config(format!(
                "rank {rank} exceeds min(d_in, d_out) = {} for layer {}",
                s.d_in.min(s.d_out),
                s.name
            )));
        }
        let mut rng = seed.derive(&s.name).rng();
        let a = (0..rank * s.d_in).map(|_| T::of(normal.sample(&mut rng))).collect();
        layers.insert(
            s.name.clone(),
            LoraLayer {
                a: Tensor::from_vec(rank, s.d_in, a),
                b: Tensor::zeros(s.d_out, rank),
            },
        );
    }
    Ok(LoraAdapter { rank, alpha, layers })
}

/// Which adapters take part in one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ActiveAdapters<'a, T> {
    pub universal: &'a LoraAdapter<T>,
    pub expert: Option<(usize, &'a LoraAdapter<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoLState<T> {
    pub universal: LoraAdapter<T>,
    pub experts: BTreeMap<usize, LoraAdapter<T>>,
    pub scales: Vec<usize>,
}

pub fn universal_prefix() -> &'static str {
    "mol/universal"
}

pub fn expert_prefix(s: usize) -> String {
    format!("mol/expert_{s}")
}

impl<T: Real> MoLState<T> {
    pub fn new(shapes: &[LayerShape], cfg: &MolConfig, seed: SeedStream) -> Result<Self> {
        cfg.validate()?;
        let universal = init_adapter(shapes, cfg.rank, cfg.alpha, seed.derive("universal"))?;
        let mut experts = BTreeMap::new();
        if cfg.enabled {
            for &s in &cfg.scales {
                experts.insert(s, init_adapter(shapes, cfg.rank, cfg.alpha, seed.derive(&expert_prefix(s)))?);
            }
        }
        Ok(MoLState {
            universal,
            experts,
            scales: cfg.scales.clone(),
        })
    }

    pub fn experts_enabled(&self) -> bool {
        !self.experts.is_empty()
    }

    /// Routed expert for `n` frames, or `None` in single-adapter mode.
    pub fn route(&self, n: usize) -> Result<Option<usize>> {
        if !self.experts_enabled() {
            return Ok(None);
        }
        route(n, &self.scales).map(Some)
    }

    pub fn active(&self, n: usize) -> Result<ActiveAdapters<'_, T>> {
        let expert = match self.route(n)? {
            Some(s) => {
                let a = self
                    .experts
                    .get(&s)
                    .ok_or_else(|| SemfiError::Config(format!("no expert adapter for frame count {s}")))?;
                Some((s, a))
            }
            None => None,
        };
        Ok(ActiveAdapters {
            universal: &self.universal,
            expert,
        })
    }

    /// Per-layer `ΔW_U + ΔW_{E_s}` for the expert routed from `n`.
    pub fn effective_delta(&self, n: usize) -> Result<BTreeMap<String, Tensor<T>>> {
        let active = self.active(n)?;
        let mut out = BTreeMap::new();
        if let Some((s, e)) = active.expert {
            let uk: BTreeSet<_> = self.universal.layers.keys().collect();
            let ek: BTreeSet<_> = e.layers.keys().collect();
            if uk != ek {
                return Err(SemfiError::Config(format!(
                    "expert {s} covers different layers than the universal adapter"
                )));
            }
        }
        for name in self.universal.layers.keys() {
            let mut d = self.universal.delta(name).expect("present");
            if let Some((_, e)) = active.expert {
                d.add_assign(&e.delta(name).expect("coverage checked"));
            }
            out.insert(name.clone(), d);
        }
        Ok(out)
    }

    /// Parameter names updated by a step at `n` frames: universal plus routed expert.
    pub fn trainable_parameters(&self, n: usize) -> Result<BTreeSet<String>> {
        let mut out = BTreeSet::new();
        let mut add = |prefix: &str, a: &LoraAdapter<T>| {
            for layer in a.layers.keys() {
                out.insert(format!("{prefix}/{layer}/A"));
                out.insert(format!("{prefix}/{layer}/B"));
            }
        };
        add(universal_prefix(), &self.universal);
        if let Some(s) = self.route(n)? {
            let e = self
                .experts
                .get(&s)
                .ok_or_else(|| SemfiError::Config(format!("no expert adapter for frame count {s}")))?;
            add(&expert_prefix(s), e);
        }
        Ok(out)
    }

    /// All adapter tensors with their checkpoint names, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        fn add<'a, T: Real>(prefix: &str, a: &'a LoraAdapter<T>, out: &mut Vec<(String, &'a Tensor<T>)>) {
            for (layer, l) in &a.layers {
                out.push((format!("{prefix}/{layer}/A"), &l.a));
                out.push((format!("{prefix}/{layer}/B"), &l.b));
            }
        }
        let mut out = Vec::new();
        add(universal_prefix(), &self.universal, &mut out);
        for (s, e) in &self.experts {
            add(&expert_prefix(*s), e, &mut out);
        }
        out
    }

    /// Mutable access by checkpoint name.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let rest = name.strip_prefix("mol/")?;
        let (owner, rest) = rest.split_once('/')?;
        let (layer, factor) = rest.rsplit_once('/')?;
        let adapter = if owner == "universal" {
            &mut self.universal
        } else {
            let s: usize = owner.strip_prefix("expert_")?.parse().ok()?;
            self.experts.get_mut(&s)?
        };
        let l = adapter.layers.get_mut(layer)?;
        match factor {
            "A" => Some(&mut l.a),
            "B" => Some(&mut l.b),
            _ => None,
        }
    }

    pub fn cast<U: Real>(&self) -> MoLState<U> {
        let cast = |a: &LoraAdapter<T>| LoraAdapter {
            rank: a.rank,
            alpha: a.alpha,
            layers: a
                .layers
                .iter()
                .map(|(k, l)| {
                    (
                        k.clone(),
                        LoraLayer {
                            a: l.a.cast(),
                            b: l.b.cast(),
                        },
                    )
                })
                .collect(),
        };
        MoLState {
            universal: cast(&self.universal),
            experts: self.experts.iter().map(|(s, e)| (*s, cast(e))).collect(),
            scales: self.scales.clone(),
        }
    }
}

/// Merged application `(base + delta)·x`.
pub fn apply_lora<T: Real>(base: &Tensor<T>, delta: &Tensor<T>, x: &[T]) -> Result<Vec<T>> {
    if base.shape() != delta.shape() {
        return Err(SemfiError::Shape(format!(
            "base {:?} and delta {:?} differ",
            base.shape(),
            delta.shape()
        )));
    }
    if x.len() != base.cols {
        return Err(SemfiError::Shape(format!(
            "input has {} entries, layer expects {}",
            x.len(),
            base.cols
        )));
    }
    Ok((0..base.rows)
        .map(|r| {
            base.row(r)
                .iter()
                .zip(delta.row(r))
                .zip(x)
                .map(|((&w, &d), &v)| (w + d) * v)
                .sum()
        })
        .collect())
}

/// Unmerged application `base·x + Σ scale·B·(A·x)` over the given adapters.
pub fn apply_lora_unmerged<T: Real>(base: &Tensor<T>, adapters: &[(&LoraLayer<T>, T)], x: &[T]) -> Result<Vec<T>> {
    if x.len() != base.cols {
        return Err(SemfiError::Shape(format!(
            "input has {} entries, layer expects {}",
            x.len(),
            base.cols
        )));
    }
    let mut y: Vec<T> = (0..base.rows)
        .map(|r| base.row(r).iter().zip(x).map(|(&w, &v)| w * v).sum())
        .collect();
    for (layer, scale) in adapters {
        if layer.a.cols != base.cols || layer.b.rows != base.rows {
            return Err(SemfiError::Shape("adapter does not match layer".into()));
        }
        let ax: Vec<T> = (0..layer.a.rows)
            .map(|r| layer.a.row(r).iter().zip(x).map(|(&w, &v)| w * v).sum())
            .collect();
        for (r, out) in y.iter_mut().enumerate() {
            let bax: T = layer.b.row(r).iter().zip(&ax).map(|(&w, &v)| w * v).sum();
            *out += *scale * bax;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_route(n: usize, scales: &[usize]) -> usize {
        let best = scales.iter().map(|&s| n.abs_diff(s)).min().unwrap();
        *scales.iter().filter(|&&s| n.abs_diff(s) == best).min().unwrap()
    }

    #[test]
    fn routing_examples() {
        let s = DEFAULT_SCALES;
        assert_eq!(route(9, &s).unwrap(), 9);
        assert_eq!(route(100, &s).unwrap(), 81);
        assert_eq!(route(25, &s).unwrap(), 17);
        assert_eq!(route(70, &s).unwrap(), 65);
        assert_eq!(route(20, &s).unwrap(), 17);
        assert!(route(5, &[]).unwrap_err().is_config());
        for n in 2..=200 {
            assert_eq!(route(n, &s).unwrap(), brute_route(n, &s), "N = {n}");
        }
    }

    fn shapes() -> Vec<LayerShape> {
        vec![
            LayerShape { name: "l0".into(), d_out: 4, d_in: 3 },
            LayerShape { name: "l1".into(), d_out: 2, d_in: 5 },
        ]
    }

    #[test]
    fn init_shapes_and_zero_b() {
        let sh = vec![LayerShape { name: "w".into(), d_out: 64, d_in: 64 }];
        let a = init_adapter::<f64>(&sh, 16, 16.0, SeedStream::new(1)).unwrap();
        let l = &a.layers["w"];
        assert_eq!(l.a.shape(), (16, 64));
        assert_eq!(l.b.shape(), (64, 16));
        assert_eq!(l.b.data.iter().sum::<f64>(), 0.0);
        let again = init_adapter::<f64>(&sh, 16, 16.0, SeedStream::new(1)).unwrap();
        assert_eq!(a, again);
        assert!(init_adapter::<f64>(&shapes(), 3, 3.0, SeedStream::new(1)).unwrap_err().is_config());
    }

    #[test]
    fn fresh_adapter_leaves_output_unchanged() {
        let sh = shapes();
        let a = init_adapter::<f64>(&sh, 2, 2.0, SeedStream::new(4)).unwrap();
        let base = Tensor::from_f64(4, 3, &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]);
        let x = [0.3, -1.0, 2.0];
        let plain = apply_lora(&base, &Tensor::zeros(4, 3), &x).unwrap();
        let with = apply_lora_unmerged(&base, &[(&a.layers["l0"], a.scale())], &x).unwrap();
        assert_eq!(plain, with);
        assert_eq!(apply_lora(&base, &Tensor::zeros(4, 3), &[0.0; 3]).unwrap(), vec![0.0; 4]);
        assert!(apply_lora(&base, &Tensor::zeros(3, 3), &x).is_err());
    }

    #[test]
    fn rank_one_delta_by_hand() {
        let cfg = MolConfig { rank: 1, alpha: 1.0, scales: vec![5, 9], ..Default::default() };
        let sh = vec![LayerShape { name: "w".into(), d_out: 2, d_in: 2 }];
        let mut mol = MoLState::<f64>::new(&sh, &cfg, SeedStream::new(0)).unwrap();
        *mol.tensor_mut("mol/universal/w/A").unwrap() = Tensor::from_f64(1, 2, &[1.0, 2.0]);
        *mol.tensor_mut("mol/universal/w/B").unwrap() = Tensor::from_f64(2, 1, &[3.0, -1.0]);
        *mol.tensor_mut("mol/expert_9/w/A").unwrap() = Tensor::from_f64(1, 2, &[0.5, 0.0]);
        *mol.tensor_mut("mol/expert_9/w/B").unwrap() = Tensor::from_f64(2, 1, &[2.0, 4.0]);
        // U = [3,-1]ᵀ[1,2] = [[3,6],[-1,-2]];  E = [2,4]ᵀ[0.5,0] = [[1,0],[2,0]]
        let d = mol.effective_delta(9).unwrap();
        let expect = [4.0, 6.0, 1.0, -2.0];
        for (a, b) in d["w"].data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        // routed to expert 5, whose B is still zero
        let d5 = mol.effective_delta(4).unwrap();
        assert_eq!(d5["w"].data, vec![3.0, 6.0, -1.0, -2.0]);
    }

    #[test]
    fn trainable_sets_follow_routing() {
        let mol = MoLState::<f32>::new(&shapes(), &MolConfig { rank: 2, ..Default::default() }, SeedStream::new(0)).unwrap();
        let p = mol.trainable_parameters(5).unwrap();
        assert!(p.iter().all(|n| n.starts_with("mol/universal/") || n.starts_with("mol/expert_5/")));
        assert_eq!(p.len(), 8);
        let p = mol.trainable_parameters(70).unwrap();
        assert!(p.iter().any(|n| n.starts_with("mol/expert_65/")));
        assert!(!p.iter().any(|n| n.starts_with("mol/expert_81/")));

        let single = MoLState::<f32>::new(
            &shapes(),
            &MolConfig { rank: 2, enabled: false, ..Default::default() },
            SeedStream::new(0),
        )
        .unwrap();
        assert!(single.trainable_parameters(33).unwrap().iter().all(|n| n.starts_with("mol/universal/")));
    }

    #[test]
    fn coverage_mismatch_is_a_config_error() {
        let mut mol = MoLState::<f64>::new(&shapes(), &MolConfig { rank: 2, ..Default::default() }, SeedStream::new(0)).unwrap();
        mol.experts.get_mut(&9).unwrap().layers.remove("l1");
        assert!(mol.effective_delta(9).unwrap_err().is_config());
        assert!(mol.effective_delta(5).is_ok());
    }

    #[test]
    fn scale_set_validation() {
        assert!(validate_scales(&[5, 5]).is_err());
        assert!(validate_scales(&[9, 5]).is_err());
        assert!(validate_scales(&[]).is_err());
        validate_scales(&DEFAULT_SCALES).unwrap();
    }
}
