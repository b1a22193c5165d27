//! Deterministic stand-ins for every generative plugin.

use nalgebra::{Rotation3, UnitQuaternion};

use super::analytic::{text_seed, AnalyticRoom, ColorField};
use super::fill::nearest_sources;
use super::{Backend, DepthEstimator, Inpainter, PanoInpainter, SuperResolver, SynthesizedViews, ViewSynthesizer, WarpRefiner};
use crate::error::{Error, Result};
use crate::geometry::{compose, Camera, CameraIntrinsics, Pose};
use crate::projection::pixel_direction;
use crate::raster::{upsample_bilinear, DepthMap, EquirectImage, MaskKind, PerspectiveImage, Rgb, ViewMask};

fn check_mask(mask: &ViewMask, width: usize, height: usize) -> Result<()> {
    if mask.width != width || mask.height != height {
        return Err(Error::param(format!(
            "mask is {}x{}, image is {width}x{height}",
            mask.width, mask.height
        )));
    }
    Ok(())
}

/// Nearest-valid fill of the masked region. Pixels no source can reach get a
/// procedural color of their world direction, seeded by the instruction.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubInpainter;

impl Inpainter for StubInpainter {
    fn inpaint(&self, image: &PerspectiveImage, mask: &ViewMask, instruction: &str) -> Result<PerspectiveImage> {
        let (w, h) = (image.width(), image.height());
        check_mask(mask, w, h)?;
        let sources: Vec<bool> = image.valid.iter().zip(&mask.bits).map(|(&v, &m)| v && !m).collect();
        let nearest = nearest_sources(w, h, &sources, &mask.bits, false);
        let field = ColorField::new(text_seed(instruction));
        let mut out = image.clone();
        for i in (0..w * h).filter(|&i| mask.bits[i]) {
            out.pixels[i] = match nearest[i] {
                Some(s) => image.pixels[s],
                None => {
                    let ray = image.intrinsics.pixel_ray(i % w, i / w);
                    field.color(&image.pose.rotation().tr_mul(&ray).normalize())
                }
            };
            out.valid[i] = true;
        }
        Ok(out)
    }

    fn backend(&self) -> Backend {
        Backend::Stub
    }
}

/// Panorama version of [`StubInpainter`]; the fill wraps around horizontally.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubPanoInpainter;

impl PanoInpainter for StubPanoInpainter {
    fn inpaint_pano(&self, pano: &EquirectImage, mask: &ViewMask, instruction: &str) -> Result<EquirectImage> {
        let (w, h) = (pano.width, pano.height);
        check_mask(mask, w, h)?;
        let sources: Vec<bool> = pano.valid.iter().zip(&mask.bits).map(|(&v, &m)| v && !m).collect();
        let nearest = nearest_sources(w, h, &sources, &mask.bits, true);
        let field = ColorField::new(text_seed(instruction));
        let mut out = pano.clone();
        for i in (0..w * h).filter(|&i| mask.bits[i]) {
            out.pixels[i] = match nearest[i] {
                Some(s) => pano.pixels[s],
                None => field.color(&pixel_direction((i % w) as f64, (i / w) as f64, w, h)),
            };
            out.valid[i] = true;
        }
        Ok(out)
    }

    fn backend(&self) -> Backend {
        Backend::Stub
    }
}

/// Bilinear upscale.
#[derive(Debug, Clone, Copy)]
pub struct StubSuperResolver {
    pub factor: u32,
}

impl Default for StubSuperResolver {
    fn default() -> Self {
        StubSuperResolver { factor: 4 }
    }
}

impl SuperResolver for StubSuperResolver {
    fn factor(&self) -> u32 {
        self.factor
    }

    fn upscale(&self, image: &PerspectiveImage) -> Result<PerspectiveImage> {
        if self.factor == 0 {
            return Err(Error::param("upscale factor must be positive"));
        }
        Ok(upsample_bilinear(image, self.factor))
    }

    fn backend(&self) -> Backend {
        Backend::Stub
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StubDepth {
    /// The same distance for every valid pixel.
    Constant(f64),
    /// Exact wall distance of a room seen from `eye`.
    Analytic { room: AnalyticRoom, eye: crate::geometry::Vec3 },
}

impl DepthEstimator for StubDepth {
    fn estimate_pano_depth(&self, pano: &EquirectImage) -> Result<DepthMap> {
        let (w, h) = (pano.width, pano.height);
        match *self {
            StubDepth::Constant(r) => {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::param(format!("constant depth must be positive, got {r}")));
                }
                DepthMap::from_fn(w, h, |col, row| pano.valid[row * w + col].then_some(r))
            }
            StubDepth::Analytic { room, eye } => DepthMap::from_fn(w, h, |col, row| {
                if !pano.valid[row * w + col] {
                    return None;
                }
                room.hit(&eye, &pixel_direction(col as f64, row as f64, w, h))
            }),
        }
    }

    fn backend(&self) -> Backend {
        Backend::Stub
    }
}

/// Result of a z-buffered forward warp before and after hole filling.
#[derive(Debug, Clone)]
pub struct ForwardWarp {
    pub image: PerspectiveImage,
    /// z-depth in the target camera, hole-filled like the image.
    pub depth: DepthMap,
    /// Target pixels no source pixel landed on.
    pub holes: ViewMask,
}

/// Splat every valid source pixel into the target camera (nearest pixel,
/// strictly closer wins, ties keep scan order) and fill the holes from the
/// nearest covered pixel.
pub fn forward_warp(image: &PerspectiveImage, depth: &DepthMap, relative_pose: &Pose, k: &CameraIntrinsics) -> Result<ForwardWarp> {
    let (sw, sh) = (image.width(), image.height());
    if !depth.same_shape(sw, sh) {
        return Err(Error::param(format!(
            "depth is {}x{}, image is {sw}x{sh}",
            depth.width, depth.height
        )));
    }
    k.validate()?;
    let (w, h) = (k.width as usize, k.height as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut owner = vec![usize::MAX; w * h];
    for row in 0..sh {
        for col in 0..sw {
            let i = row * sw + col;
            if !(image.valid[i] && depth.valid[i]) {
                continue;
            }
            let p = depth.values[i] * image.intrinsics.pixel_ray(col, row);
            let q = relative_pose.world_to_cam(&p);
            let Some((u, v)) = k.project(&q).filter(|&(u, v)| k.contains(u, v)) else {
                continue;
            };
            let t = (v.floor() as usize) * w + u.floor() as usize;
            if q.z < zbuf[t] {
                zbuf[t] = q.z;
                owner[t] = i;
            }
        }
    }

    let covered: Vec<bool> = owner.iter().map(|&o| o != usize::MAX).collect();
    let hole_bits: Vec<bool> = covered.iter().map(|c| !c).collect();
    let nearest = nearest_sources(w, h, &covered, &hole_bits, false);
    let mut pixels: Vec<Rgb> = vec![[0.0; 3]; w * h];
    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for t in 0..w * h {
        if let Some(s) = nearest[t] {
            pixels[t] = image.pixels[owner[s]];
            values[t] = zbuf[s];
            valid[t] = true;
        }
    }
    let pose = compose(relative_pose, &image.pose);
    Ok(ForwardWarp {
        image: PerspectiveImage::new(*k, pose, pixels, valid.clone())?,
        depth: DepthMap::new(w, h, values, valid)?,
        holes: ViewMask::new(w, h, hole_bits, MaskKind::Occlusion)?,
    })
}

/// Forward depth warp followed by nearest fill.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubWarpRefiner;

impl WarpRefiner for StubWarpRefiner {
    fn warp_refine(&self, image: &PerspectiveImage, depth: &DepthMap, relative_pose: &Pose, k: &CameraIntrinsics) -> Result<(PerspectiveImage, ViewMask)> {
        let warped = forward_warp(image, depth, relative_pose, k)?;
        Ok((warped.image, warped.holes))
    }

    fn backend(&self) -> Backend {
        Backend::Stub
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthesisMode {
    /// Render every frame straight from an analytic room.
    Analytic(AnalyticRoom),
    /// Forward-warp the initial view with its depth hint.
    Warp,
}

#[derive(Debug, Clone, Copy)]
pub struct StubViewSynthesizer {
    pub mode: SynthesisMode,
}

impl StubViewSynthesizer {
    pub fn new(mode: SynthesisMode) -> Self {
        StubViewSynthesizer { mode }
    }
}

/// Camera poses of `frame_count` frames spread evenly over the waypoint
/// polyline `[identity, trajectory...]`, in the frame of `initial`.
/// Positions are interpolated linearly and rotations by slerp.
pub fn trajectory_poses(initial: &Pose, trajectory: &[Pose], frame_count: usize) -> Result<Vec<Pose>> {
    if trajectory.is_empty() {
        return Err(Error::param("trajectory must not be empty"));
    }
    if frame_count == 0 {
        return Err(Error::param("frame count must be positive"));
    }
    let mut path = Vec::with_capacity(trajectory.len() + 1);
    path.push(Pose::identity());
    path.extend_from_slice(trajectory);
    let quats: Vec<UnitQuaternion<f64>> = path
        .iter()
        .map(|p| UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*p.rotation())))
        .collect();
    let segments = trajectory.len();

    let mut poses = vec![*initial];
    for f in 1..frame_count {
        let s = f as f64 * segments as f64 / (frame_count - 1) as f64;
        let seg = (s.floor() as usize).min(segments - 1);
        let t = s - seg as f64;
        let (a, b) = (&path[seg], &path[seg + 1]);
        let q = quats[seg]
            .try_slerp(&quats[seg + 1], t, 1e-12)
            .unwrap_or(if t < 0.5 { quats[seg] } else { quats[seg + 1] });
        let position = a.position() + (b.position() - a.position()) * t;
        let relative = Pose::new(q.to_rotation_matrix().into_inner(), position)?;
        // `relative` is a camera pose in initial-camera coordinates; its
        // world-to-camera map is relative ∘ initial.
        poses.push(compose(&relative, initial));
    }
    Ok(poses)
}

impl ViewSynthesizer for StubViewSynthesizer {
    fn synthesize_views(&self, initial: &PerspectiveImage, trajectory: &[Pose], frame_count: usize, depth_hint: Option<&DepthMap>) -> Result<SynthesizedViews> {
        let poses = trajectory_poses(&initial.pose, trajectory, frame_count)?;
        let k = initial.intrinsics;
        let mut frames = Vec::with_capacity(frame_count);
        let mut depths = Vec::with_capacity(frame_count);
        match self.mode {
            SynthesisMode::Analytic(room) => {
                for (f, pose) in poses.iter().enumerate() {
                    let (image, depth) = room.render_view(&Camera { pose: *pose, intrinsics: k });
                    frames.push(if f == 0 { initial.clone() } else { image });
                    depths.push(depth);
                }
            }
            SynthesisMode::Warp => {
                let depth = depth_hint.ok_or_else(|| Error::param("warp synthesis needs the depth of the initial view"))?;
                frames.push(initial.clone());
                depths.push(depth.clone());
                for pose in &poses[1..] {
                    let warped = forward_warp(initial, depth, &pose.relative_to(&initial.pose), &k)?;
                    let mut image = warped.image;
                    image.pose = *pose;
                    frames.push(image);
                    depths.push(warped.depth);
                }
            }
        }
        Ok(SynthesizedViews { frames, depths, poses })
    }

    fn backend(&self) -> Backend {
        Backend::Stub
    }
}
