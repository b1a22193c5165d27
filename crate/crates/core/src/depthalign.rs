//! Disparity-space alignment of a moving scene's depth against panorama depth.
//!
//! The scale/shift pair solves `min Σ (α / d_p + β − 1 / d)²` over the overlap
//! mask in closed form; the rectified depth is `1 / (α / d_p + β)`; one scalar
//! scale (the median of `d̂ / d`) then carries the alignment to every later
//! frame; a 7x7 Gaussian smooths the rectified depth along the mask edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{median_in_place, DepthMap, ViewMask};

/// Disparities at or below this are treated as infinitely far and invalidated.
pub const MIN_DISPARITY: f64 = 1e-6;
pub const SMOOTH_SIGMA: f64 = 1.4;
/// Half-size of the 7x7 smoothing kernel.
pub const SMOOTH_RADIUS: usize = 3;
/// Pixels within this Chebyshev distance of the mask boundary are smoothed.
pub const BAND_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSolution {
    pub alpha: f64,
    pub beta: f64,
    /// Median depth ratio, filled in once the scale has been propagated.
    pub gamma: Option<f64>,
    /// Mean squared disparity error over the pixels used.
    pub residual: f64,
    pub pixels_used: usize,
}

impl AlignmentSolution {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }
}

fn check_shape(a: &DepthMap, w: usize, h: usize, what: &str) -> Result<()> {
    if a.same_shape(w, h) {
        Ok(())
    } else {
        Err(Error::param(format!("{what} is {}x{}, expected {w}x{h}", a.width, a.height)))
    }
}

/// Closed-form least-squares scale and shift on inverse panorama depth.
pub fn solve_disparity_alignment(d: &DepthMap, d_p: &DepthMap, overlap: &ViewMask) -> Result<AlignmentSolution> {
    let (w, h) = (d.width, d.height);
    check_shape(d_p, w, h, "panorama depth")?;
    if overlap.width != w || overlap.height != h {
        return Err(Error::param("overlap mask does not match depth size"));
    }

    let pairs: Vec<(f64, f64)> = (0..w * h)
        .filter(|&i| overlap.bits[i] && d.valid[i] && d_p.valid[i])
        .map(|i| (1.0 / d_p.values[i], 1.0 / d.values[i]))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("{n} usable pixels, need at least 2")));
    }

    let nf = n as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut xx) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
        xx += x * x;
    }
    if !(sxx > 1e-20 * xx) {
        return Err(Error::Degenerate("panorama disparity is constant over the overlap".into()));
    }

    let alpha = sxy / sxx;
    let beta = mean_y - alpha * mean_x;
    let residual = pairs.iter().map(|&(x, y)| (alpha * x + beta - y).powi(2)).sum::<f64>() / nf;
    Ok(AlignmentSolution {
        alpha,
        beta,
        gamma: None,
        residual,
        pixels_used: n,
    })
}

/// `d̂ = 1 / (α / d_p + β)`, invalidating pixels whose disparity is not positive.
pub fn rectify_depth(d_p: &DepthMap, sol: &AlignmentSolution) -> DepthMap {
    let mut values = Vec::with_capacity(d_p.values.len());
    let mut valid = Vec::with_capacity(d_p.values.len());
    for (&dp, &ok) in d_p.values.iter().zip(&d_p.valid) {
        let disparity = if ok { sol.alpha / dp + sol.beta } else { 0.0 };
        if ok && disparity > MIN_DISPARITY && disparity.is_finite() {
            values.push(1.0 / disparity);
            valid.push(true);
        } else {
            values.push(0.0);
            valid.push(false);
        }
    }
    DepthMap {
        width: d_p.width,
        height: d_p.height,
        values,
        valid,
    }
}

/// Median of `d̂ / d` over pixels valid in both maps.
pub fn scale_factor(d: &DepthMap, d_hat: &DepthMap) -> Result<f64> {
    check_shape(d_hat, d.width, d.height, "rectified depth")?;
    let mut ratios: Vec<f64> = (0..d.values.len())
        .filter(|&i| d.valid[i] && d_hat.valid[i])
        .map(|i| d_hat.values[i] / d.values[i])
        .collect();
    median_in_place(&mut ratios).ok_or_else(|| Error::Degenerate("no overlap between d and d̂".into()))
}

/// Compute the scale factor and multiply every frame's depth by it.
pub fn scale_factor_and_propagate(d: &DepthMap, d_hat: &DepthMap, frames: &[DepthMap]) -> Result<(f64, Vec<DepthMap>)> {
    let gamma = scale_factor(d, d_hat)?;
    let scaled = frames
        .iter()
        .map(|f| DepthMap {
            values: f.values.iter().map(|v| v * gamma).collect(),
            ..f.clone()
        })
        .collect();
    Ok((gamma, scaled))
}

/// Whether each pixel lies within [`BAND_WIDTH`] (Chebyshev) of a pixel with
/// the opposite mask value.
pub fn boundary_band(mask: &ViewMask) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    // integral image of set bits
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for row in 0..h {
        let mut run = 0;
        for col in 0..w {
            run += mask.bits[row * w + col] as u32;
            sat[(row + 1) * (w + 1) + col + 1] = sat[row * (w + 1) + col + 1] + run;
        }
    }
    let r = BAND_WIDTH;
    (0..w * h)
        .map(|i| {
            let (col, row) = (i % w, i / w);
            let (c0, c1) = (col.saturating_sub(r), (col + r + 1).min(w));
            let (r0, r1) = (row.saturating_sub(r), (row + r + 1).min(h));
            let ones = sat[r1 * (w + 1) + c1] + sat[r0 * (w + 1) + c0] - sat[r0 * (w + 1) + c1] - sat[r1 * (w + 1) + c0];
            let area = ((c1 - c0) * (r1 - r0)) as u32;
            ones > 0 && ones < area
        })
        .collect()
}

/// 7x7 Gaussian weights, `exp(-(dx² + dy²) / 2σ²)`, unnormalized.
pub fn smoothing_kernel() -> [[f64; 7]; 7] {
    let r = SMOOTH_RADIUS as i32;
    std::array::from_fn(|y| {
        std::array::from_fn(|x| {
            let (dx, dy) = ((x as i32 - r) as f64, (y as i32 - r) as f64);
            (-(dx * dx + dy * dy) / (2.0 * SMOOTH_SIGMA * SMOOTH_SIGMA)).exp()
        })
    })
}

/// Blur `d_hat` on the band around the mask boundary; every other pixel is
/// copied unchanged. Taps outside the image or on invalid depth are dropped and
/// the remaining weights renormalized.
pub fn smooth_mask_edges(d_hat: &DepthMap, mask: &ViewMask) -> Result<DepthMap> {
    let (w, h) = (d_hat.width, d_hat.height);
    if mask.width != w || mask.height != h {
        return Err(Error::param("mask does not match depth size"));
    }
    let band = boundary_band(mask);
    let kernel = smoothing_kernel();
    let r = SMOOTH_RADIUS as isize;
    let mut out = d_hat.clone();
    for (i, _) in band.iter().enumerate().filter(|(i, b)| **b && d_hat.valid[*i]) {
        let (col, row) = ((i % w) as isize, (i / w) as isize);
        let (mut acc, mut wsum) = (0.0, 0.0);
        for dy in -r..=r {
            let y = row + dy;
            if y < 0 || y >= h as isize {
                continue;
            }
            for dx in -r..=r {
                let x = col + dx;
                if x < 0 || x >= w as isize {
                    continue;
                }
                let j = y as usize * w + x as usize;
                if d_hat.valid[j] {
                    let k = kernel[(dy + r) as usize][(dx + r) as usize];
                    acc += k * d_hat.values[j];
                    wsum += k;
                }
            }
        }
        out.values[i] = acc / wsum;
    }
    Ok(out)
}
