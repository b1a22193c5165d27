//! Forward Gaussian splat renderer.
//!
//! Each Gaussian is evaluated once per pixel ray, at the point of the ray
//! closest to its center in the Gaussian's own (Mahalanobis) metric:
//! `σ_i = α_i · exp(−½ q_min)`. Samples are composited front to back by the
//! ray parameter of that point, `C = Σ c_i σ_i Π_{j<i} (1 − σ_j)`. Rays are
//! scaled so the parameter equals camera-space z, which makes the rendered
//! depth a z-depth map.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Cholesky, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Camera, Mat3, Vec3};
use crate::knn::KdTree;
use crate::pointcloud::PointCloud;
use crate::raster::{DepthMap, PerspectiveImage, Rgb};

/// Samples with `α · G` below this are skipped.
pub const MIN_CONTRIBUTION: f64 = 1e-9;
/// Compositing stops once the remaining transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-10;
/// Pixels with less accumulated opacity have no depth.
pub const MIN_DEPTH_OPACITY: f64 = 0.01;

const TILE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    mu: Vec3,
    sigma: Mat3,
    precision: Mat3,
    max_std: f64,
    alpha: f64,
    color: Rgb,
}

impl Gaussian3D {
    pub fn new(mu: Vec3, sigma: Mat3, alpha: f64, color: Rgb) -> Result<Self> {
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::param("Gaussian center must be finite"));
        }
        let asym = (sigma - sigma.transpose()).abs().max();
        if !(asym <= 1e-12) {
            return Err(Error::param("covariance is not symmetric"));
        }
        let chol = Cholesky::new(sigma).ok_or_else(|| Error::param("covariance is not positive definite"))?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param(format!("opacity {alpha} outside (0, 1]")));
        }
        if color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("color outside [0, 1]"));
        }
        Ok(Gaussian3D {
            mu,
            sigma,
            precision: chol.inverse(),
            max_std: SymmetricEigen::new(sigma).eigenvalues.max().sqrt(),
            alpha,
            color,
        })
    }

    pub fn isotropic(mu: Vec3, std: f64, alpha: f64, color: Rgb) -> Result<Self> {
        Self::new(mu, Mat3::identity() * (std * std), alpha, color)
    }

    pub fn mu(&self) -> &Vec3 {
        &self.mu
    }

    pub fn sigma(&self) -> &Mat3 {
        &self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn color(&self) -> Rgb {
        self.color
    }

    pub fn with_color(mut self, color: Rgb) -> Self {
        self.color = color;
        self
    }

    /// Largest standard deviation over all directions.
    pub fn max_std(&self) -> f64 {
        self.max_std
    }
}

/// `exp(−½ (p − μ)ᵀ Σ⁻¹ (p − μ))`.
pub fn eval_gaussian(g: &Gaussian3D, p: &Vec3) -> f64 {
    let x = p - g.mu;
    (-0.5 * x.dot(&(g.precision * x))).exp()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianSet {
    pub gaussians: Vec<Gaussian3D>,
}

impl GaussianSet {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Gaussian moved into the camera frame with the per-ray quantities
/// precomputed: `b = A μ` and `c0 = μᵀ A μ` for precision `A`.
struct Projected {
    index: u32,
    a: Mat3,
    b: Vec3,
    c0: f64,
    /// Largest `q` whose sample can reach [`MIN_CONTRIBUTION`].
    reach2: f64,
    alpha: f64,
    color: Rgb,
}

/// Ordered so that a max-heap pops the smallest `(t, index)` first.
struct Sample {
    t: f64,
    index: u32,
    sigma: f64,
    slot: u32,
}

impl Ord for Sample {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Sample {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Sample {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Sample {}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: PerspectiveImage,
    pub depth: DepthMap,
    /// Accumulated opacity per pixel.
    pub opacity: Vec<f64>,
}

pub fn render(set: &GaussianSet, cam: &Camera) -> (PerspectiveImage, DepthMap) {
    let out = render_full(set, cam);
    (out.image, out.depth)
}

pub fn render_full(set: &GaussianSet, cam: &Camera) -> RenderOutput {
    let k = cam.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let (tiles_x, tiles_y) = (w.div_ceil(TILE), h.div_ceil(TILE));

    let rot = cam.pose.rotation();
    let projected: Vec<(Projected, [usize; 4])> = set
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let reach2 = 2.0 * (g.alpha / MIN_CONTRIBUTION).ln();
            if reach2 <= 0.0 {
                return None;
            }
            let mu = cam.pose.world_to_cam(&g.mu);
            let radius = reach2.sqrt() * g.max_std();
            let bounds = screen_bounds(&mu, radius, &k, tiles_x, tiles_y)?;
            let a = rot * g.precision * rot.transpose();
            let b = a * mu;
            Some((
                Projected {
                    index: i as u32,
                    a,
                    b,
                    c0: mu.dot(&b),
                    reach2,
                    alpha: g.alpha,
                    color: g.color,
                },
                bounds,
            ))
        })
        .collect();

    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (slot, (_, [tx0, tx1, ty0, ty1])) in projected.iter().enumerate() {
        for ty in *ty0..=*ty1 {
            for tx in *tx0..=*tx1 {
                bins[ty * tiles_x + tx].push(slot as u32);
            }
        }
    }

    struct Px {
        color: Rgb,
        depth: Option<f64>,
        opacity: f64,
    }

    let tiles: Vec<Vec<(usize, Px)>> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let mut samples: Vec<Sample> = Vec::new();
            let mut out = Vec::with_capacity(TILE * TILE);
            for row in ty * TILE..((ty + 1) * TILE).min(h) {
                for col in tx * TILE..((tx + 1) * TILE).min(w) {
                    let d = k.pixel_ray(col, row);
                    samples.clear();
                    for &slot in bin {
                        let g = &projected[slot as usize].0;
                        let db = d.dot(&g.b);
                        let dad = d.dot(&(g.a * d));
                        let t_star = db / dad;
                        if t_star <= 0.0 {
                            continue;
                        }
                        let q = (g.c0 - db * t_star).max(0.0);
                        if q > g.reach2 * (1.0 + 1e-9) {
                            continue;
                        }
                        let sigma = g.alpha * (-0.5 * q).exp();
                        if sigma >= MIN_CONTRIBUTION {
                            samples.push(Sample {
                                t: t_star,
                                index: g.index,
                                sigma,
                                slot,
                            });
                        }
                    }

                    // popping in (t, index) order; compositing usually stops
                    // long before the heap is empty
                    let mut heap = BinaryHeap::from(std::mem::take(&mut samples));
                    let mut transmittance = 1.0f64;
                    let mut color = [0.0f64; 3];
                    let (mut depth_acc, mut weight_sum) = (0.0f64, 0.0f64);
                    while let Some(Sample { t: t_star, sigma, slot, .. }) = heap.pop() {
                        let wgt = sigma * transmittance;
                        let c = projected[slot as usize].0.color;
                        for ch in 0..3 {
                            color[ch] += c[ch] as f64 * wgt;
                        }
                        depth_acc += t_star * wgt;
                        weight_sum += wgt;
                        transmittance *= 1.0 - sigma;
                        if transmittance < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    samples = heap.into_vec();
                    samples.clear();
                    debug_assert!(weight_sum <= 1.0 + 1e-12, "accumulated opacity {weight_sum} > 1");
                    out.push((
                        row * w + col,
                        Px {
                            color: color.map(|c| c as f32),
                            depth: (weight_sum >= MIN_DEPTH_OPACITY).then(|| depth_acc / weight_sum),
                            opacity: weight_sum,
                        },
                    ));
                }
            }
            out
        })
        .collect();

    let mut pixels = vec![[0.0f32; 3]; w * h];
    let mut values = vec![0.0; w * h];
    let mut dvalid = vec![false; w * h];
    let mut opacity = vec![0.0; w * h];
    for (i, px) in tiles.into_iter().flatten() {
        pixels[i] = px.color;
        opacity[i] = px.opacity;
        if let Some(d) = px.depth {
            values[i] = d;
            dvalid[i] = true;
        }
    }
    RenderOutput {
        image: PerspectiveImage {
            pixels,
            valid: vec![true; w * h],
            intrinsics: k,
            pose: cam.pose,
        },
        depth: DepthMap {
            width: w,
            height: h,
            values,
            valid: dvalid,
        },
        opacity,
    }
}

/// Inclusive tile range `[tx0, tx1, ty0, ty1]` covering the projection of a
/// camera-frame sphere, or `None` when it cannot touch the image.
fn screen_bounds(m: &Vec3, radius: f64, k: &crate::geometry::CameraIntrinsics, tiles_x: usize, tiles_y: usize) -> Option<[usize; 4]> {
    if m.z + radius <= 0.0 {
        return None;
    }
    // side planes of the pyramid spanned by the image rectangle
    let (w, h) = (k.width as f64, k.height as f64);
    let (x0, x1) = (-k.cx / k.fx, (w - k.cx) / k.fx);
    let (y0, y1) = (-k.cy / k.fy, (h - k.cy) / k.fy);
    let outside = |a: f64, slope: f64| a / (1.0 + slope * slope).sqrt() < -radius;
    if outside(m.x - x0 * m.z, x0) || outside(x1 * m.z - m.x, x1) || outside(m.y - y0 * m.z, y0) || outside(y1 * m.z - m.y, y1) {
        return None;
    }
    let full = [0, tiles_x - 1, 0, tiles_y - 1];
    let denom = m.z * m.z - radius * radius;
    if m.z <= radius || denom <= 1e-12 * m.z * m.z {
        return Some(full);
    }
    // Tangent planes through the optical center: x² (z² − r²) − 2 x mx mz + mx² − r² = 0.
    let extent = |mc: f64| {
        let disc = (mc * mc + denom).max(0.0).sqrt() * radius;
        ((mc * m.z - disc) / denom, (mc * m.z + disc) / denom)
    };
    let (x0, x1) = extent(m.x);
    let (y0, y1) = extent(m.y);
    let (u0, u1) = (k.fx * x0 + k.cx - 1.0, k.fx * x1 + k.cx + 1.0);
    let (v0, v1) = (k.fy * y0 + k.cy - 1.0, k.fy * y1 + k.cy + 1.0);
    if u1 < 0.0 || v1 < 0.0 || u0 >= w || v0 >= h {
        return None;
    }
    let tile = |v: f64, n: usize| ((v.max(0.0) as usize) / TILE).min(n - 1);
    Some([tile(u0, tiles_x), tile(u1, tiles_x), tile(v0, tiles_y), tile(v1, tiles_y)])
}

/// How each point's isotropic standard deviation is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusRule {
    /// Neighbours averaged for the spacing estimate.
    pub k: usize,
    pub multiplier: f64,
    /// Lower bound on the standard deviation, world units.
    pub min_std: f64,
    /// Used for points with no neighbours or a zero spacing estimate.
    pub fallback_std: f64,
}

impl Default for RadiusRule {
    fn default() -> Self {
        RadiusRule {
            k: 3,
            multiplier: 1.0,
            min_std: 0.0,
            fallback_std: 0.01,
        }
    }
}

/// One isotropic Gaussian per point, sized from the mean distance to its `k`
/// nearest neighbours.
pub fn pointcloud_to_gaussians(cloud: &PointCloud, alpha: f64, rule: &RadiusRule) -> Result<GaussianSet> {
    if cloud.is_empty() {
        return Err(Error::param("cannot build Gaussians from an empty cloud"));
    }
    if !(rule.multiplier > 0.0 && rule.fallback_std > 0.0 && rule.min_std >= 0.0) {
        return Err(Error::param("radius rule needs a positive multiplier and fallback"));
    }
    let tree = KdTree::new(&cloud.positions);
    let gaussians = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let d2 = tree.nearest_excluding(i, rule.k);
            let spacing = if d2.is_empty() {
                0.0
            } else {
                d2.iter().map(|v| v.sqrt()).sum::<f64>() / d2.len() as f64
            };
            let mut std = (rule.multiplier * spacing).max(rule.min_std);
            if std <= 0.0 {
                std = rule.fallback_std;
            }
            Gaussian3D::isotropic(cloud.positions[i], std, alpha, cloud.colors[i])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianSet { gaussians })
}
