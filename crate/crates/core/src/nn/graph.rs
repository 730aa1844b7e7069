//! Reverse-mode automatic differentiation over a flat tape of 2-D tensors.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the tape
//! is a valid topological order for backpropagation. Gradients are only
//! propagated into nodes flagged as needing them, which keeps frozen weights
//! from costing a weight-gradient product.

use std::sync::Arc;

use super::tensor::{gemm, Real, Tensor, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A set of tokens that attend to each other: rows `start + i * stride`
/// for `i` in `0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenGroup {
    pub start: usize,
    pub len: usize,
    pub stride: usize,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var },
    Add(Var, Var),
    AddRow { x: Var, row: Var },
    MulRow { x: Var, row: Var },
    Mul(Var, Var),
    Scale(Var, T),
    Silu(Var),
    Gelu(Var),
    LayerNorm { x: Var, inv_std: Vec<T> },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        groups: Arc<[TokenGroup]>,
        probs: Vec<T>,
    },
    SliceCols { x: Var, start: usize },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// The tape. Build a forward pass with the op methods, then call [`Graph::backward`].
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    record: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

const LN_EPS: f64 = 1e-6;

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            record: true,
        }
    }

    /// A tape that never tracks gradients.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            record: false,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad: needs_grad && self.record,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, t: Tensor<T>, trainable: bool) -> Var {
        self.push(t, Op::Leaf, trainable)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `x · wᵀ` with `x: [L, in]`, `w: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        assert_eq!(xv.cols, wv.cols, "linear: input width {} vs weight {}x{}", xv.cols, wv.rows, wv.cols);
        let out = xv.matmul_t(wv);
        let ng = self.ng(x) || self.ng(w);
        self.push(out, Op::Linear { x, w }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add: shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(av.rows, av.cols, data);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul: shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(av.rows, av.cols, data);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// Adds a `[1, C]` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert_eq!((1, xv.cols), rv.shape(), "add_row: row shape");
        let mut out = xv.clone();
        for r in out.data.chunks_mut(xv.cols) {
            for (o, &b) in r.iter_mut().zip(&rv.data) {
                *o += b;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        self.push(out, Op::AddRow { x, row }, ng)
    }

    /// Multiplies every row of `x` element-wise by a `[1, C]` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert_eq!((1, xv.cols), rv.shape(), "mul_row: row shape");
        let mut out = xv.clone();
        for r in out.data.chunks_mut(xv.cols) {
            for (o, &b) in r.iter_mut().zip(&rv.data) {
                *o *= b;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        self.push(out, Op::MulRow { x, row }, ng)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).scaled(s);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| v / (T::one() + (-v).exp())).collect();
        let out = Tensor::from_vec(xv.rows, xv.cols, data);
        let ng = self.ng(x);
        self.push(out, Op::Silu(x), ng)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| gelu_fwd(v)).collect();
        let out = Tensor::from_vec(xv.rows, xv.cols, data);
        let ng = self.ng(x);
        self.push(out, Op::Gelu(x), ng)
    }

    /// Per-row normalization to zero mean and unit variance, no affine terms.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.cols;
        let mut out = Tensor::zeros(xv.rows, c);
        let mut inv_std = Vec::with_capacity(xv.rows);
        let cn = T::of(c as f64);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let is = T::one() / (var + T::of(LN_EPS)).sqrt();
            inv_std.push(is);
            for (o, &v) in out.data[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::LayerNorm { x, inv_std }, ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.ng(x);
        self.push(out, Op::SliceCols { x, start }, ng)
    }

    /// Multi-head softmax attention restricted to token groups.
    ///
    /// `q`, `k`, `v` are `[L, D]`; heads split `D` into equal slices. Each
    /// token attends only to tokens of its own group, and every token must
    /// belong to exactly one group.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, groups: Arc<[TokenGroup]>) -> Var {
        let (l, d) = self.value(q).shape();
        assert_eq!(self.value(k).shape(), (l, d));
        assert_eq!(self.value(v).shape(), (l, d));
        assert!(heads > 0 && d % heads == 0, "heads must divide width");
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut out = Tensor::zeros(l, d);
        let total: usize = groups.iter().map(|g| g.len * g.len).sum::<usize>() * heads;
        let record = self.record && (self.ng(q) || self.ng(k) || self.ng(v));
        let mut probs = if record { Vec::with_capacity(total) } else { Vec::new() };
        let mut scratch = Vec::new();
        let (qd, kd, vd) = (&self.value(q).data, &self.value(k).data, &self.value(v).data);
        for g in groups.iter() {
            assert!(g.len > 0 && g.start + (g.len - 1) * g.stride < l, "token group out of range");
            for h in 0..heads {
                let tok = |off| View {
                    offset: g.start * d + off,
                    rows: g.len,
                    cols: dh,
                    row_stride: g.stride * d,
                    col_stride: 1,
                };
                let hv = tok(h * dh);
                scratch.clear();
                scratch.resize(g.len * g.len, T::zero());
                let sv = View::dense(g.len, g.len);
                gemm(scale, qd, hv, kd, hv.t(), T::zero(), &mut scratch, sv);
                for row in scratch.chunks_mut(g.len) {
                    softmax_in_place(row);
                }
                gemm(T::one(), &scratch, sv, vd, hv, T::zero(), &mut out.data, hv);
                if record {
                    probs.extend_from_slice(&scratch);
                }
            }
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                groups,
                probs,
            },
            ng,
        )
    }

    /// Mean squared error, a `[1, 1]` scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Var {
        let (pv, tv) = (self.value(pred), self.value(target));
        assert_eq!(pv.shape(), tv.shape(), "mse: shape mismatch");
        let n = T::of(pv.data.len() as f64);
        let s = pv
            .data
            .iter()
            .zip(&tv.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            / n;
        let ng = self.ng(pred) || self.ng(target);
        self.push(Tensor::from_vec(1, 1, vec![s]), Op::Mse { pred, target }, ng)
    }

    pub fn scalar(&self, v: Var) -> T {
        let t = self.value(v);
        assert_eq!(t.shape(), (1, 1), "not a scalar");
        t.data[0]
    }

    /// Gradient accumulated into `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn grad_slot<'a>(grads: &'a mut [Option<Tensor<T>>], v: Var, shape: (usize, usize)) -> &'a mut Tensor<T> {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(1, 1, vec![T::one()]));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            let nodes = &self.nodes;
            let ng = |v: Var| nodes[v.0].needs_grad;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w } => {
                    if ng(*x) {
                        Self::accumulate(&mut grads, *x, gout.matmul(val(*w)));
                    }
                    if ng(*w) {
                        Self::accumulate(&mut grads, *w, gout.transpose().matmul(val(*x)));
                    }
                }
                Op::Add(a, b) => {
                    if ng(*a) {
                        Self::accumulate(&mut grads, *a, gout.clone());
                    }
                    if ng(*b) {
                        Self::accumulate(&mut grads, *b, gout);
                    }
                }
                Op::Mul(a, b) => {
                    if ng(*a) {
                        let g = zip_map(&gout, val(*b), |g, y| g * y);
                        Self::accumulate(&mut grads, *a, g);
                    }
                    if ng(*b) {
                        let g = zip_map(&gout, val(*a), |g, x| g * x);
                        Self::accumulate(&mut grads, *b, g);
                    }
                }
                Op::AddRow { x, row } => {
                    if ng(*row) {
                        let mut g = Tensor::zeros(1, gout.cols);
                        for r in gout.data.chunks(gout.cols) {
                            for (a, &b) in g.data.iter_mut().zip(r) {
                                *a += b;
                            }
                        }
                        Self::accumulate(&mut grads, *row, g);
                    }
                    if ng(*x) {
                        Self::accumulate(&mut grads, *x, gout);
                    }
                }
                Op::MulRow { x, row } => {
                    let (xv, rv) = (val(*x), val(*row));
                    if ng(*row) {
                        let mut g = Tensor::zeros(1, gout.cols);
                        for (gr, xr) in gout.data.chunks(gout.cols).zip(xv.data.chunks(xv.cols)) {
                            for ((a, &gg), &xx) in g.data.iter_mut().zip(gr).zip(xr) {
                                *a += gg * xx;
                            }
                        }
                        Self::accumulate(&mut grads, *row, g);
                    }
                    if ng(*x) {
                        let mut g = gout;
                        for r in g.data.chunks_mut(rv.cols) {
                            for (a, &b) in r.iter_mut().zip(&rv.data) {
                                *a *= b;
                            }
                        }
                        Self::accumulate(&mut grads, *x, g);
                    }
                }
                Op::Scale(x, s) => {
                    if ng(*x) {
                        Self::accumulate(&mut grads, *x, gout.scaled(*s));
                    }
                }
                Op::Silu(x) => {
                    if ng(*x) {
                        let g = zip_map(&gout, val(*x), |g, v| {
                            let s = T::one() / (T::one() + (-v).exp());
                            g * s * (T::one() + v * (T::one() - s))
                        });
                        Self::accumulate(&mut grads, *x, g);
                    }
                }
                Op::Gelu(x) => {
                    if ng(*x) {
                        let g = zip_map(&gout, val(*x), |g, v| g * gelu_grad(v));
                        Self::accumulate(&mut grads, *x, g);
                    }
                }
                Op::LayerNorm { x, inv_std } => {
                    if ng(*x) {
                        let y = &node.value;
                        let c = y.cols;
                        let cn = T::of(c as f64);
                        let mut g = Tensor::zeros(y.rows, c);
                        for r in 0..y.rows {
                            let gy = &gout.data[r * c..(r + 1) * c];
                            let yr = &y.data[r * c..(r + 1) * c];
                            let mean_g = gy.iter().copied().sum::<T>() / cn;
                            let mean_gy = gy.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>() / cn;
                            for j in 0..c {
                                g.data[r * c + j] = inv_std[r] * (gy[j] - mean_g - yr[j] * mean_gy);
                            }
                        }
                        Self::accumulate(&mut grads, *x, g);
                    }
                }
                Op::SliceCols { x, start } => {
                    if ng(*x) {
                        let xv = val(*x);
                        let gx = Self::grad_slot(&mut grads, *x, xv.shape());
                        for r in 0..gout.rows {
                            for j in 0..gout.cols {
                                gx.data[r * xv.cols + start + j] += gout.data[r * gout.cols + j];
                            }
                        }
                    }
                }
                Op::Mse { pred, target } => {
                    let (pv, tv) = (val(*pred), val(*target));
                    let k = gout.data[0] * T::of(2.0) / T::of(pv.data.len() as f64);
                    if ng(*pred) {
                        let g = zip_map(pv, tv, |a, b| k * (a - b));
                        Self::accumulate(&mut grads, *pred, g);
                    }
                    if ng(*target) {
                        let g = zip_map(pv, tv, |a, b| k * (b - a));
                        Self::accumulate(&mut grads, *target, g);
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    groups,
                    probs,
                } => {
                    let (l, d) = val(*q).shape();
                    let dh = d / heads;
                    let scale = T::one() / T::of(dh as f64).sqrt();
                    let (qd, kd, vd) = (&val(*q).data, &val(*k).data, &val(*v).data);
                    let mut gq = if ng(*q) { Some(Tensor::zeros(l, d)) } else { None };
                    let mut gk = if ng(*k) { Some(Tensor::zeros(l, d)) } else { None };
                    let mut gv = if ng(*v) { Some(Tensor::zeros(l, d)) } else { None };
                    let mut dp = Vec::new();
                    let mut off = 0;
                    for g in groups.iter() {
                        let n = g.len;
                        let sv = View::dense(n, n);
                        for h in 0..*heads {
                            let hv = View {
                                offset: g.start * d + h * dh,
                                rows: n,
                                cols: dh,
                                row_stride: g.stride * d,
                                col_stride: 1,
                            };
                            let p = &probs[off..off + n * n];
                            off += n * n;
                            if let Some(gv) = gv.as_mut() {
                                gemm(T::one(), p, sv.t(), &gout.data, hv, T::one(), &mut gv.data, hv);
                            }
                            if gq.is_none() && gk.is_none() {
                                continue;
                            }
                            dp.clear();
                            dp.resize(n * n, T::zero());
                            gemm(T::one(), &gout.data, hv, vd, hv.t(), T::zero(), &mut dp, sv);
                            for r in 0..n {
                                let pr = &p[r * n..(r + 1) * n];
                                let dr = &mut dp[r * n..(r + 1) * n];
                                let dot = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<T>();
                                for (dd, &pp) in dr.iter_mut().zip(pr) {
                                    *dd = pp * (*dd - dot);
                                }
                            }
                            if let Some(gq) = gq.as_mut() {
                                gemm(scale, &dp, sv, kd, hv, T::one(), &mut gq.data, hv);
                            }
                            if let Some(gk) = gk.as_mut() {
                                gemm(scale, &dp, sv.t(), qd, hv, T::one(), &mut gk.data, hv);
                            }
                        }
                    }
                    if let Some(g) = gq {
                        Self::accumulate(&mut grads, *q, g);
                    }
                    if let Some(g) = gk {
                        Self::accumulate(&mut grads, *k, g);
                    }
                    if let Some(g) = gv {
                        Self::accumulate(&mut grads, *v, g);
                    }
                }
            }
        }
        self.grads = grads;
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows, a.cols, data)
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

fn gelu_fwd<T: Real>(x: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let u = c * (x + T::of(0.044715) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let u = c * (x + T::of(0.044715) * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::of(3.0 * 0.044715) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Builds a loss touching every op, parameterized by the first input.
    fn build(g: &mut Graph<f64>, p: &Tensor<f64>, fixed: &[Tensor<f64>]) -> (Var, Var) {
        let x = g.param(p.clone(), true);
        let w = g.param(fixed[0].clone(), true);
        let row = g.param(fixed[1].clone(), true);
        let target = g.input(fixed[2].clone());
        let h = g.linear(x, w);
        let h = g.add_row(h, row);
        let n = g.layer_norm(h);
        let m = g.mul_row(n, row);
        let s = g.silu(m);
        let a = g.slice_cols(s, 0, 4);
        let b = g.slice_cols(h, 2, 4);
        let groups: Arc<[TokenGroup]> = vec![
            TokenGroup { start: 0, len: 3, stride: 2 },
            TokenGroup { start: 1, len: 3, stride: 2 },
        ]
        .into();
        let att = g.attention(a, b, a, 2, groups);
        let ge = g.gelu(att);
        let pr = g.mul(ge, b);
        let sc = g.scale(pr, 1.7);
        let sum = g.add(sc, a);
        let loss = g.mse(sum, target);
        (x, loss)
    }

    #[test]
    fn all_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_tensor(&mut rng, 6, 5);
        let fixed = vec![rand_tensor(&mut rng, 6, 5), rand_tensor(&mut rng, 1, 6), rand_tensor(&mut rng, 6, 4)];
        let mut g = Graph::new();
        let (x, loss) = build(&mut g, &p, &fixed);
        g.backward(loss);
        let analytic = g.grad(x).unwrap().clone();
        let h = 1e-6;
        for i in 0..p.data.len() {
            let mut pp = p.clone();
            pp.data[i] += h;
            let mut gp = Graph::new();
            let (_, lp) = build(&mut gp, &pp, &fixed);
            let mut pm = p.clone();
            pm.data[i] -= h;
            let mut gm = Graph::new();
            let (_, lm) = build(&mut gm, &pm, &fixed);
            let fd = (gp.scalar(lp) - gm.scalar(lm)) / (2.0 * h);
            let a = analytic.data[i];
            assert!((fd - a).abs() <= 1e-7 + 1e-5 * fd.abs(), "entry {i}: fd {fd} vs analytic {a}");
        }
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::<f64>::inference();
        let q = g.input(rand_tensor(&mut rng, 4, 2));
        let v = g.input(Tensor::from_f64(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]));
        let out = g.attention(q, q, v, 1, vec![TokenGroup { start: 0, len: 4, stride: 1 }].into());
        for &o in &g.value(out).data {
            assert!((o - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_leaves_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_f64(1, 2, &[1.0, 2.0]));
        let w = g.param(Tensor::from_f64(1, 2, &[0.5, 0.5]), false);
        let b = g.param(Tensor::from_f64(1, 1, &[0.0]), true);
        let y = g.linear(x, w);
        let y = g.add(y, b);
        let t = g.input(Tensor::from_f64(1, 1, &[0.0]));
        let l = g.mse(y, t);
        g.backward(l);
        assert!(g.grad(w).is_none());
        assert!((g.grad(b).unwrap().data[0] - 3.0).abs() < 1e-12);
    }
}
