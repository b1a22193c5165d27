//! Recover a disparity scale and shift, rectify, and smooth the seam around an inpainted region.
//!
//! cargo run --example depth_alignment

use panoscene::depthalign::{rectify_depth, scale_factor, smooth_mask_edges, solve_disparity_alignment};
use panoscene::raster::{DepthMap, MaskKind, ViewMask};

fn main() -> panoscene::Result<()> {
    let (w, h) = (96, 64);
    let truth = DepthMap::from_fn(w, h, |c, r| Some(2.0 + 0.02 * c as f64 + 0.01 * r as f64))?;

    // A prediction whose disparity maps onto the truth as 1/d = 2.0 / d_p + 0.05.
    let predicted = DepthMap::from_fn(w, h, |c, r| {
        let d = truth.get(c, r)?;
        Some(2.0 / (1.0 / d - 0.05))
    })?;

    let overlap = ViewMask::new(w, h, (0..w * h).map(|i| i % w < 60).collect(), MaskKind::Overlap)?;
    let sol = solve_disparity_alignment(&truth, &predicted, &overlap)?;
    println!("alpha {:.6} beta {:.6} residual {:.3e} over {} px", sol.alpha, sol.beta, sol.residual, sol.pixels_used);

    let rectified = rectify_depth(&predicted, &sol);
    println!("scale factor after rectification: {:.6}", scale_factor(&truth, &rectified)?);

    // Blend the right third, which stands in for an inpainted region, into its surroundings.
    let mut hole = ViewMask::empty(w, h, MaskKind::InpaintRegion);
    for i in 0..w * h {
        hole.bits[i] = i % w >= 64;
    }
    let smoothed = smooth_mask_edges(&rectified, &hole)?;
    let changed = smoothed.values.iter().zip(&rectified.values).filter(|(a, b)| a != b).count();
    println!("smoothing touched {changed} pixels along the mask boundary");
    Ok(())
}
