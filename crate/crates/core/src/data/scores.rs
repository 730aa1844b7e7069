//! First/last-frame similarity and displacement scores.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::video::Frame;

pub trait FeatureExtractor {
    fn features(&self, frame: &Frame) -> Result<Vec<f64>>;
}

/// Grayscale thumbnail, flattened and centred on mid-gray.
///
/// Centring on 0.5 rather than the frame's own mean keeps uniform frames
/// usable: black maps to all −0.5, white to all +0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrayscaleFeatures {
    pub size: usize,
}

impl Default for GrayscaleFeatures {
    fn default() -> Self {
        GrayscaleFeatures { size: 16 }
    }
}

impl FeatureExtractor for GrayscaleFeatures {
    fn features(&self, frame: &Frame) -> Result<Vec<f64>> {
        let g = frame.grayscale();
        let thumb = Frame::resample_plane(&g, frame.height, frame.width, self.size, self.size);
        Ok(thumb.into_iter().map(|v| v - 0.5).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SemfiError::Shape(format!("feature lengths {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SemfiError::DegenerateFeature("zero-norm feature vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn same_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(SemfiError::Shape(format!("frame dims {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(())
}

/// Cosine similarity of the two frames' features.
pub fn clip_score(first: &Frame, last: &Frame, extractor: &dyn FeatureExtractor) -> Result<f64> {
    same_dims(first, last)?;
    cosine(&extractor.features(first)?, &extractor.features(last)?)
}

/// Per-pixel displacement; `a(x) ≈ b(x + (u, v))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub h: usize,
    pub w: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField {
            h,
            w,
            u: vec![0.0; h * w],
            v: vec![0.0; h * w],
        }
    }

    pub fn uniform(h: usize, w: usize, dx: f64, dy: f64) -> Self {
        FlowField {
            h,
            w,
            u: vec![dx; h * w],
            v: vec![dy; h * w],
        }
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.u.is_empty() {
            return 0.0;
        }
        let s: f64 = self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v)).sum();
        s / self.u.len() as f64
    }
}

pub trait FlowEstimator {
    fn flow(&self, a: &Frame, b: &Frame) -> Result<FlowField>;
}

/// Mean L2 norm of the estimated flow from `first` to `last`.
pub fn flow_score(first: &Frame, last: &Frame, estimator: &dyn FlowEstimator) -> Result<f64> {
    same_dims(first, last)?;
    let f = estimator.flow(first, last)?;
    if f.h != first.height || f.w != first.width {
        return Err(SemfiError::Estimator(format!(
            "flow field is {}x{}, frames are {}x{}",
            f.h, f.w, first.height, first.width
        )));
    }
    let s = f.mean_magnitude();
    if !s.is_finite() {
        return Err(SemfiError::Estimator("non-finite flow".into()));
    }
    Ok(s)
}

/// Returns a fixed field, for data whose motion is known exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownFlow {
    pub field: FlowField,
}

impl FlowEstimator for KnownFlow {
    fn flow(&self, a: &Frame, _b: &Frame) -> Result<FlowField> {
        if (a.height, a.width) != (self.field.h, self.field.w) {
            return Err(SemfiError::Estimator(format!(
                "known flow is {}x{}, frames are {}x{}",
                self.field.h, self.field.w, a.height, a.width
            )));
        }
        Ok(self.field.clone())
    }
}

/// Bilinear lookup with edge clamping.
pub fn sample_bilinear(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let p = |yy: usize, xx: usize| plane[yy * w + xx];
    (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1))
}

/// Coarse-to-fine Lucas–Kanade on grayscale pyramids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidFlow {
    pub levels: usize,
    /// Half-width of the square aggregation window.
    pub radius: usize,
    pub iterations: usize,
}

impl Default for PyramidFlow {
    fn default() -> Self {
        PyramidFlow {
            levels: 3,
            radius: 2,
            iterations: 4,
        }
    }
}

struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl PyramidFlow {
    fn pyramid(&self, frame: &Frame) -> Vec<Plane> {
        let mut out = vec![Plane {
            h: frame.height,
            w: frame.width,
            data: frame.grayscale(),
        }];
        while out.len() < self.levels.max(1) {
            let top = out.last().expect("non-empty");
            if top.h < 8 || top.w < 8 {
                break;
            }
            let (h, w) = (top.h / 2, top.w / 2);
            let data = Frame::resample_plane(&top.data, top.h, top.w, h, w);
            out.push(Plane { h, w, data });
        }
        out
    }

    fn refine(&self, a: &Plane, b: &Plane, u: &mut [f64], v: &mut [f64]) {
        let (h, w) = (a.h, a.w);
        let r = self.radius as isize;
        let mut ix = vec![0.0; h * w];
        let mut iy = vec![0.0; h * w];
        let mut it = vec![0.0; h * w];
        for _ in 0..self.iterations {
            let warped: Vec<f64> = (0..h * w)
                .map(|p| sample_bilinear(&b.data, h, w, (p % w) as f64 + u[p], (p / w) as f64 + v[p]))
                .collect();
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                    let dxs = (xr - xl).max(1) as f64;
                    let dys = (yd - yu).max(1) as f64;
                    let gx = |img: &[f64]| (img[y * w + xr] - img[y * w + xl]) / dxs;
                    let gy = |img: &[f64]| (img[yd * w + x] - img[yu * w + x]) / dys;
                    let (sx, sy) = (x as f64 + u[p], y as f64 + v[p]);
                    // Samples that fall off the frame carry no information.
                    if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                        ix[p] = 0.0;
                        iy[p] = 0.0;
                        it[p] = 0.0;
                        continue;
                    }
                    ix[p] = 0.5 * (gx(&a.data) + gx(&warped));
                    iy[p] = 0.5 * (gy(&a.data) + gy(&warped));
                    it[p] = warped[p] - a.data[p];
                }
            }
            let mut moved = false;
            let mut next_u = u.to_vec();
            let mut next_v = v.to_vec();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                        for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                            let q = yy as usize * w + xx as usize;
                            sxx += ix[q] * ix[q];
                            sxy += ix[q] * iy[q];
                            syy += iy[q] * iy[q];
                            sxt += ix[q] * it[q];
                            syt += iy[q] * it[q];
                        }
                    }
                    let det = sxx * syy - sxy * sxy;
                    let tr = sxx + syy;
                    // Skip windows whose structure tensor is (near) singular.
                    if tr <= 1e-9 || det <= 1e-4 * tr * tr {
                        continue;
                    }
                    let du = -(syy * sxt - sxy * syt) / det;
                    let dv = -(sxx * syt - sxy * sxt) / det;
                    let p = y as usize * w + x as usize;
                    let (nu, nv) = (u[p] + du.clamp(-2.0, 2.0), v[p] + dv.clamp(-2.0, 2.0));
                    // Accept only steps that lower the window's matching error.
                    let ssd = |fu: f64, fv: f64| -> f64 {
                        let mut e = 0.0;
                        for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                            for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                                let q = yy as usize * w + xx as usize;
                                let d = sample_bilinear(&b.data, h, w, xx as f64 + fu, yy as f64 + fv) - a.data[q];
                                e += d * d;
                            }
                        }
                        e
                    };
                    if ssd(nu, nv) < ssd(u[p], v[p]) {
                        next_u[p] = nu;
                        next_v[p] = nv;
                        moved = true;
                    }
                }
            }
            u.copy_from_slice(&next_u);
            v.copy_from_slice(&next_v);
            if !moved {
                break;
            }
        }
    }
}

impl FlowEstimator for PyramidFlow {
    fn flow(&self, a: &Frame, b: &Frame) -> Result<FlowField> {
        same_dims(a, b)?;
        let (pa, pb) = (self.pyramid(a), self.pyramid(b));
        let mut u = vec![0.0; pa.last().map_or(0, |p| p.h * p.w)];
        let mut v = u.clone();
        for lvl in (0..pa.len()).rev() {
            let (la, lb) = (&pa[lvl], &pb[lvl]);
            if lvl + 1 < pa.len() {
                let coarse = &pa[lvl + 1];
                let up = |f: &[f64]| -> Vec<f64> {
                    (0..la.h * la.w)
                        .map(|p| {
                            let (y, x) = (p / la.w, p % la.w);
                            let cy = (y * coarse.h / la.h).min(coarse.h - 1);
                            let cx = (x * coarse.w / la.w).min(coarse.w - 1);
                            2.0 * f[cy * coarse.w + cx]
                        })
                        .collect()
                };
                u = up(&u);
                v = up(&v);
            }
            self.refine(la, lb, &mut u, &mut v);
        }
        Ok(FlowField {
            h: a.height,
            w: a.width,
            u,
            v,
        })
    }
}
