//! Equirectangular and perspective mappings.
//!
//! Equirect pixel `(u, v)` (pixel centers on integers) maps to azimuth
//! `θ = (u + 0.5) / W · 2π − π` and polar angle `φ = (v + 0.5) / H · π`, with
//! direction `(sin φ sin θ, −cos φ, sin φ cos θ)`: the image center looks along
//! +z, row 0 is the upper pole (−y) and u grows toward +x.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraIntrinsics, Mat3, Vec3};
use crate::raster::{check_equirect_size, DepthMap, EquirectImage, MaskKind, PerspectiveImage, Rgb, ViewMask};

/// Maximum distance between view centers accepted as "the same position".
pub const POSITION_TOLERANCE: f64 = 1e-9;

pub fn equirect_to_direction(u: f64, v: f64, width: usize, height: usize) -> Result<Vec3> {
    check_equirect_size(width, height)?;
    if !(u >= 0.0 && u < width as f64 && v >= 0.0 && v < height as f64) {
        return Err(Error::param(format!("pixel ({u}, {v}) outside {width}x{height} panorama")));
    }
    Ok(pixel_direction(u, v, width, height))
}

#[inline]
pub(crate) fn pixel_direction(u: f64, v: f64, width: usize, height: usize) -> Vec3 {
    let theta = (u + 0.5) / width as f64 * 2.0 * PI - PI;
    let phi = (v + 0.5) / height as f64 * PI;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(sp * st, -cp, sp * ct)
}

/// Pixel-index coordinates of a direction; `u` lies in `[-0.5, W - 0.5]`.
#[inline]
pub fn direction_to_equirect(d: &Vec3, width: usize, height: usize) -> (f64, f64) {
    let theta = d.x.atan2(d.z);
    let phi = (-d.y / d.norm()).clamp(-1.0, 1.0).acos();
    let u = (theta + PI) / (2.0 * PI) * width as f64 - 0.5;
    let v = phi / PI * height as f64 - 0.5;
    (u, v)
}

/// Where a camera-frame ray lands in an image, if inside the frustum.
#[inline]
pub fn frustum_hit(k: &CameraIntrinsics, ray_cam: &Vec3) -> Option<(f64, f64)> {
    k.project(ray_cam).filter(|&(u, v)| k.contains(u, v))
}

/// Resample `src` into a camera rotated by `rotation` (source camera frame to
/// destination camera frame), same position and intrinsics.
///
/// Returns the warped view and the mask of destination pixels the source does
/// not cover with valid pixels, which is the region left for inpainting.
pub fn warp_rotate(src: &PerspectiveImage, rotation: &Mat3) -> (PerspectiveImage, ViewMask) {
    let k = src.intrinsics;
    let (w, h) = (src.width(), src.height());
    let pose = crate::geometry::Pose::new(rotation * src.pose.rotation(), *src.pose.position())
        .unwrap_or_else(|_| src.pose);

    if *rotation == Mat3::identity() {
        let mut out = src.clone();
        out.pose = pose;
        let bits = src.valid.iter().map(|v| !v).collect();
        return (out, ViewMask { width: w, height: h, bits, kind: MaskKind::InpaintRegion });
    }

    let inv = rotation.transpose();
    let samples: Vec<Option<Rgb>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let ray = inv * k.pixel_ray(i % w, i / w);
            frustum_hit(&k, &ray)
                .filter(|&(u, v)| src.valid_at(u, v))
                .map(|(u, v)| src.sample(u, v))
        })
        .collect();

    let mut pixels = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for s in samples {
        pixels.push(s.unwrap_or([0.0; 3]));
        valid.push(s.is_some());
        mask.push(s.is_none());
    }
    let out = PerspectiveImage {
        pixels,
        valid,
        intrinsics: k,
        pose,
    };
    (out, ViewMask { width: w, height: h, bits: mask, kind: MaskKind::InpaintRegion })
}

/// Normalized blending weights of every view that sees world direction `d`.
///
/// Each covering view contributes `cos(angle to its optical axis)^4`; a view
/// covers `d` when the ray lands inside its image on a valid pixel.
pub fn blend_weights(views: &[PerspectiveImage], d: &Vec3) -> Vec<(usize, f64, f64, f64)> {
    let mut hits = Vec::new();
    let mut total = 0.0;
    for (idx, view) in views.iter().enumerate() {
        let ray = view.pose.rotation() * d;
        if let Some((u, v)) = frustum_hit(&view.intrinsics, &ray) {
            if view.valid_at(u, v) {
                let cos = ray.z / ray.norm();
                let w = cos.powi(4);
                total += w;
                hits.push((idx, w, u, v));
            }
        }
    }
    for h in &mut hits {
        h.1 /= total;
    }
    hits
}

/// Gather every view onto a `width x width/2` equirect canvas.
pub fn perspective_to_equirect(views: &[PerspectiveImage], width: usize) -> Result<EquirectImage> {
    let height = width / 2;
    check_equirect_size(width, height)?;
    let first = views.first().ok_or_else(|| Error::param("need at least one view"))?;
    let center = *first.pose.position();
    if views.iter().any(|v| (v.pose.position() - center).norm() > POSITION_TOLERANCE) {
        return Err(Error::param("all views must share one camera position"));
    }

    let gathered: Vec<Option<Rgb>> = (0..width * height)
        .into_par_iter()
        .map(|i| {
            let d = pixel_direction((i % width) as f64, (i / width) as f64, width, height);
            let hits = blend_weights(views, &d);
            if hits.is_empty() {
                return None;
            }
            let mut acc = [0.0f64; 3];
            for &(idx, w, u, v) in &hits {
                let s = views[idx].sample(u, v);
                for c in 0..3 {
                    acc[c] += w * s[c] as f64;
                }
            }
            Some(acc.map(|a| a as f32))
        })
        .collect();

    let valid = gathered.iter().map(Option::is_some).collect();
    let pixels = gathered.into_iter().map(|p| p.unwrap_or([0.0; 3])).collect();
    EquirectImage::new(width, height, pixels, valid)
}

/// Render a pinhole view of the panorama; the camera is assumed to sit at the
/// panorama center.
pub fn equirect_to_perspective(pano: &EquirectImage, cam: &Camera) -> PerspectiveImage {
    let k = cam.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let samples: Vec<(Rgb, bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let d = cam.pose.rotation().tr_mul(&k.pixel_ray(i % w, i / w));
            let (u, v) = direction_to_equirect(&d, pano.width, pano.height);
            (pano.sample(u, v), pano.valid_at(u, v))
        })
        .collect();
    let (pixels, valid) = samples.into_iter().unzip();
    PerspectiveImage {
        pixels,
        valid,
        intrinsics: k,
        pose: cam.pose,
    }
}

/// Perspective z-depth seen by `cam` from a panorama of ray distances.
pub fn equirect_depth_to_perspective(depth: &DepthMap, cam: &Camera) -> Result<DepthMap> {
    check_equirect_size(depth.width, depth.height)?;
    let k = cam.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let (pw, ph) = (depth.width, depth.height);
    let samples: Vec<Option<f64>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let ray = k.pixel_ray(i % w, i / w);
            let d = cam.pose.rotation().tr_mul(&ray);
            let (u, v) = direction_to_equirect(&d, pw, ph);
            // bilinear over valid taps only
            let x0 = u.floor();
            let y0 = v.clamp(0.0, (ph - 1) as f64).floor();
            let fx = u - x0;
            let fy = v.clamp(0.0, (ph - 1) as f64) - y0;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (dx, dy, wt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
                let col = (x0 as isize + dx).rem_euclid(pw as isize) as usize;
                let row = (y0 as usize + dy).min(ph - 1);
                let j = row * pw + col;
                if depth.valid[j] && wt > 0.0 {
                    acc += wt * depth.values[j];
                    wsum += wt;
                }
            }
            (wsum > 0.0).then(|| acc / wsum / ray.norm())
        })
        .collect();
    DepthMap::from_fn(w, h, |c, r| samples[r * w + c])
}

/// Pixels of the panorama no view covered, handed to the panorama inpainter.
pub fn pole_completion_mask(pano: &EquirectImage) -> ViewMask {
    ViewMask {
        width: pano.width,
        height: pano.height,
        bits: pano.valid.iter().map(|v| !v).collect(),
        kind: MaskKind::InpaintRegion,
    }
}
