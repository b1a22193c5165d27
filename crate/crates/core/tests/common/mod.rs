//! Independent reference implementations shared by the integration tests.
//! Everything here is written directly from the definitions, without the
//! shortcuts (tiling, cutoffs, integral images) the library takes.

#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use panoscene::geometry::{Camera, Pose};
use panoscene::raster::{DepthMap, PerspectiveImage, ViewMask};
use panoscene::splat::GaussianSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Standard normal sample (Box-Muller).
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        normal(rng),
        normal(rng),
        normal(rng),
        normal(rng),
    ));
    *q.to_rotation_matrix().matrix()
}

pub struct BruteRender {
    pub color: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
}

/// Per pixel: evaluate every Gaussian at the ray point closest to its center
/// in its own metric, sort by ray parameter and composite with no cutoffs.
pub fn brute_force_splat(set: &GaussianSet, cam: &Camera) -> BruteRender {
    let k = cam.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let origin = *cam.pose.position();
    let r = *cam.pose.rotation();
    let inv: Vec<Matrix3<f64>> = set.gaussians.iter().map(|g| g.sigma().try_inverse().unwrap()).collect();
    let mut color = vec![[0.0; 3]; w * h];
    let mut opacity = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let ray_cam = Vector3::new(
                (col as f64 + 0.5 - k.cx) / k.fx,
                (row as f64 + 0.5 - k.cy) / k.fy,
                1.0,
            );
            let d = r.transpose() * ray_cam;
            let mut samples: Vec<(f64, usize, f64)> = Vec::new();
            for (i, g) in set.gaussians.iter().enumerate() {
                let a = &inv[i];
                let m = g.mu() - origin;
                let t = d.dot(&(a * m)) / d.dot(&(a * d));
                if t <= 0.0 {
                    continue;
                }
                let x = t * d - m;
                let q = x.dot(&(a * x));
                samples.push((t, i, g.alpha() * (-0.5 * q).exp()));
            }
            samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut trans = 1.0;
            let mut c = [0.0; 3];
            for &(_, i, s) in &samples {
                let col_i = set.gaussians[i].color();
                for ch in 0..3 {
                    c[ch] += col_i[ch] as f64 * s * trans;
                }
                trans *= 1.0 - s;
            }
            color[row * w + col] = c;
            opacity[row * w + col] = 1.0 - trans;
        }
    }
    BruteRender { color, opacity }
}

/// Per-point visibility through the homogeneous 4x4 world-to-camera matrix:
/// true when the point is NOT seen.
pub fn frustum_oracle(points: &[Vector3<f64>], cam: &Camera) -> Vec<bool> {
    let m: Matrix4<f64> = cam.pose.matrix();
    let k = cam.intrinsics.matrix();
    points
        .iter()
        .map(|p| {
            let pc = m * Vector4::new(p.x, p.y, p.z, 1.0);
            let xc = Vector3::new(pc.x, pc.y, pc.z);
            if xc.z <= 0.0 {
                return true;
            }
            let uvw = k * xc;
            let (u, v) = (uvw.x / uvw.z, uvw.y / uvw.z);
            let inside = u >= 0.0 && u < cam.intrinsics.width as f64 && v >= 0.0 && v < cam.intrinsics.height as f64;
            !inside
        })
        .collect()
}

/// Pixels within Chebyshev distance `r` of a pixel with the other mask value,
/// by direct neighbourhood scan.
pub fn band_oracle(mask: &ViewMask, r: usize) -> Vec<bool> {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let r = r as isize;
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let me = mask.bits[i as usize];
            (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (xx, yy) = (x + dx, y + dy);
                    xx >= 0 && yy >= 0 && xx < w && yy < h && mask.bits[(yy * w + xx) as usize] != me
                })
            })
        })
        .collect()
}

/// Dense 7x7 Gaussian (σ = 1.4) on the band, renormalized over in-bounds
/// valid taps; all other pixels copied.
pub fn smoothing_oracle(depth: &DepthMap, mask: &ViewMask) -> DepthMap {
    let band = band_oracle(mask, 3);
    let (w, h) = (depth.width as isize, depth.height as isize);
    let mut out = depth.clone();
    for i in 0..(w * h) as usize {
        if !band[i] || !depth.valid[i] {
            continue;
        }
        let (x, y) = (i as isize % w, i as isize / w);
        let (mut num, mut den) = (0.0, 0.0);
        for dy in -3isize..=3 {
            for dx in -3isize..=3 {
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= w || yy >= h {
                    continue;
                }
                let j = (yy * w + xx) as usize;
                if depth.valid[j] {
                    let wt = (-((dx * dx + dy * dy) as f64) / (2.0 * 1.4 * 1.4)).exp();
                    num += wt * depth.values[j];
                    den += wt;
                }
            }
        }
        out.values[i] = num / den;
    }
    out
}

/// Backward homography warp of a rotation about the camera center: the
/// destination pixel samples the source at `K Rᵀ K⁻¹ p` (nearest).
pub fn homography_warp(src: &PerspectiveImage, rel: &Matrix3<f64>) -> Vec<Option<[f32; 3]>> {
    let k = src.intrinsics.matrix();
    let h = k * rel.transpose() * k.try_inverse().unwrap();
    let (w, ht) = (src.width(), src.height());
    let mut out = Vec::with_capacity(w * ht);
    for row in 0..ht {
        for col in 0..w {
            let p = h * Vector3::new(col as f64 + 0.5, row as f64 + 0.5, 1.0);
            if p.z <= 0.0 {
                out.push(None);
                continue;
            }
            let (u, v) = (p.x / p.z, p.y / p.z);
            if u < 0.0 || v < 0.0 || u >= w as f64 || v >= ht as f64 {
                out.push(None);
            } else {
                out.push(Some(src.pixels[v as usize * w + u as usize]));
            }
        }
    }
    out
}

pub fn smooth_image(cam: &Camera) -> PerspectiveImage {
    let (w, h) = (cam.intrinsics.width as f64, cam.intrinsics.height as f64);
    PerspectiveImage::from_fn(cam.intrinsics, cam.pose, |c, r| {
        let (x, y) = (c as f64 / w, r as f64 / h);
        [
            (0.5 + 0.4 * (3.0 * x).sin() * (2.0 * y).cos()) as f32,
            (0.5 + 0.4 * (2.5 * y + x).sin()) as f32,
            (0.3 + 0.5 * x * y) as f32,
        ]
    })
}

pub fn pose_at(yaw_deg: f64, pitch_deg: f64, pos: [f64; 3]) -> Pose {
    Pose::looking(yaw_deg.to_radians(), pitch_deg.to_radians(), Vector3::from(pos))
}

/// Every file under `dir`, relative path and bytes, sorted by path.
pub fn tree_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
