//! Depth lifting, world/camera transforms, first-view visibility masking and
//! point-cloud fusion.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraIntrinsics, Pose, Vec3};
use crate::projection::pixel_direction;
use crate::raster::{DepthMap, EquirectImage, PerspectiveImage, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceTag {
    Panorama,
    Moving(u32),
    Supplementary,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTag::Panorama => f.write_str("panorama"),
            SourceTag::Moving(i) => write!(f, "moving({i})"),
            SourceTag::Supplementary => f.write_str("supplementary"),
        }
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "panorama" => Ok(SourceTag::Panorama),
            "supplementary" => Ok(SourceTag::Supplementary),
            _ => s
                .strip_prefix("moving(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|n| n.parse().ok())
                .map(SourceTag::Moving)
                .ok_or_else(|| Error::param(format!("unknown source tag {s:?}"))),
        }
    }
}

/// Colored points in world coordinates, each tagged with where it came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<Rgb>,
    pub tags: Vec<SourceTag>,
}

impl PointCloud {
    pub fn from_parts(positions: Vec<Vec3>, colors: Vec<Rgb>, tags: Vec<SourceTag>) -> Result<Self> {
        if positions.len() != colors.len() || positions.len() != tags.len() {
            return Err(Error::param("point cloud buffers differ in length"));
        }
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::param("point positions must be finite"));
        }
        if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("point colors must lie in [0, 1]"));
        }
        Ok(PointCloud {
            positions,
            colors,
            tags,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Points whose `keep` flag is set, in source order.
    pub fn select(&self, keep: &[bool]) -> PointCloud {
        let mut out = PointCloud::default();
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.positions.push(self.positions[i]);
            out.colors.push(self.colors[i]);
            out.tags.push(self.tags[i]);
        }
        out
    }

    pub fn retag(mut self, tag: SourceTag) -> Self {
        self.tags.iter_mut().for_each(|t| *t = tag);
        self
    }

    /// Contiguous runs of equal tags, in order.
    pub fn tag_runs(&self) -> Vec<(SourceTag, usize)> {
        let mut runs: Vec<(SourceTag, usize)> = Vec::new();
        for &t in &self.tags {
            match runs.last_mut() {
                Some((last, n)) if *last == t => *n += 1,
                _ => runs.push((t, 1)),
            }
        }
        if runs.is_empty() {
            runs.push((SourceTag::Panorama, 0));
        }
        runs
    }

    /// Mean of the positions.
    pub fn centroid(&self) -> Option<Vec3> {
        if self.is_empty() {
            return None;
        }
        let sum: Vec3 = self.positions.iter().sum();
        Some(sum / self.len() as f64)
    }
}

/// One point per valid panorama pixel at `center + depth · direction`.
pub fn lift_equirect(pano: &EquirectImage, depth: &DepthMap, center: &Vec3) -> Result<PointCloud> {
    if !depth.same_shape(pano.width, pano.height) {
        return Err(Error::param(format!(
            "depth {}x{} does not match panorama {}x{}",
            depth.width, depth.height, pano.width, pano.height
        )));
    }
    let mut cloud = PointCloud::default();
    for row in 0..pano.height {
        for col in 0..pano.width {
            let i = row * pano.width + col;
            if !pano.valid[i] {
                continue;
            }
            if !depth.valid[i] {
                return Err(Error::param(format!("no depth at valid panorama pixel ({col}, {row})")));
            }
            let d = pixel_direction(col as f64, row as f64, pano.width, pano.height);
            cloud.positions.push(center + depth.values[i] * d);
            cloud.colors.push(pano.pixels[i]);
            cloud.tags.push(SourceTag::Panorama);
        }
    }
    Ok(cloud)
}

/// Lift a perspective view with z-depth into world points.
pub fn lift_perspective(image: &PerspectiveImage, depth: &DepthMap, tag: SourceTag) -> Result<PointCloud> {
    let (w, h) = (image.width(), image.height());
    if !depth.same_shape(w, h) {
        return Err(Error::param("depth does not match image size"));
    }
    let mut cloud = PointCloud::default();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !(image.valid[i] && depth.valid[i]) {
                continue;
            }
            let p_cam = depth.values[i] * image.intrinsics.pixel_ray(col, row);
            cloud.positions.push(image.pose.cam_to_world(&p_cam));
            cloud.colors.push(image.pixels[i]);
            cloud.tags.push(tag);
        }
    }
    Ok(cloud)
}

/// Camera-frame coordinates of every point.
pub fn world_to_camera(points: &[Vec3], pose: &Pose) -> Vec<Vec3> {
    points.par_iter().map(|p| pose.world_to_cam(p)).collect()
}

/// Continuous pixel coordinates; NaN where `z <= 0`.
pub fn project_points(cam_points: &[Vec3], k: &CameraIntrinsics) -> (Vec<f64>, Vec<f64>) {
    cam_points
        .iter()
        .map(|p| k.project(p).unwrap_or((f64::NAN, f64::NAN)))
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityResult {
    /// Point lies in front of the camera.
    pub m_front: Vec<bool>,
    /// Projection falls inside the image.
    pub m_bound: Vec<bool>,
    /// Point is NOT seen by the camera: `!(m_bound && m_front)`.
    pub m: Vec<bool>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn visibility_mask(points: &PointCloud, cam: &Camera) -> VisibilityResult {
    let cam_points = world_to_camera(&points.positions, &cam.pose);
    let (u, v) = project_points(&cam_points, &cam.intrinsics);
    let m_front: Vec<bool> = cam_points.iter().map(|p| p.z > 0.0).collect();
    let m_bound: Vec<bool> = u.iter().zip(&v).map(|(&u, &v)| cam.intrinsics.contains(u, v)).collect();
    let m: Vec<bool> = m_front.iter().zip(&m_bound).map(|(&f, &b)| !(b && f)).collect();
    debug_assert!((0..m.len()).all(|i| m[i] == !(m_bound[i] && m_front[i])));
    VisibilityResult {
        m_front,
        m_bound,
        m,
        u,
        v,
    }
}

/// Drop every point the first camera of a moving scene can see.
pub fn filter_moving_scene(points: &PointCloud, first_cam: &Camera) -> PointCloud {
    let vis = visibility_mask(points, first_cam);
    points.select(&vis.m)
}

/// Concatenate the panorama cloud with every moving-scene cloud.
pub fn fuse(panorama: &PointCloud, moving: &[PointCloud]) -> PointCloud {
    let mut out = panorama.clone();
    for m in moving {
        out.positions.extend_from_slice(&m.positions);
        out.colors.extend_from_slice(&m.colors);
        out.tags.extend_from_slice(&m.tags);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;
    use crate::projection::direction_to_equirect;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<Vec3>) -> PointCloud {
        let n = points.len();
        PointCloud::from_parts(points, vec![[0.5; 3]; n], vec![SourceTag::Moving(0); n]).unwrap()
    }

    fn cam() -> Camera {
        Camera {
            pose: Pose::identity(),
            intrinsics: CameraIntrinsics::from_fov(60.0, 64, 48).unwrap(),
        }
    }

    #[test]
    fn tags_parse_back() {
        for t in [SourceTag::Panorama, SourceTag::Moving(7), SourceTag::Supplementary] {
            assert_eq!(t.to_string().parse::<SourceTag>().unwrap(), t);
        }
        assert!("moving(x)".parse::<SourceTag>().is_err());
    }

    #[test]
    fn constant_depth_lifts_to_a_sphere() {
        let pano = EquirectImage::new(32, 16, vec![[0.1; 3]; 512], vec![true; 512]).unwrap();
        let depth = DepthMap::constant(32, 16, 2.5).unwrap();
        let c = Vec3::new(1.0, -1.0, 0.5);
        let pts = lift_equirect(&pano, &depth, &c).unwrap();
        assert_eq!(pts.len(), 512);
        for p in &pts.positions {
            assert_abs_diff_eq!((p - c).norm(), 2.5, epsilon = 1e-9);
        }
        let short = DepthMap::constant(30, 15, 1.0).unwrap();
        assert!(lift_equirect(&pano, &short, &c).is_err());
    }

    #[test]
    fn lift_then_reproject_recovers_pixels_and_depth() {
        let (w, h) = (64, 32);
        let pano = EquirectImage::new(w, h, vec![[0.3; 3]; w * h], vec![true; w * h]).unwrap();
        let depth = DepthMap::from_fn(w, h, |c, r| Some(1.0 + 0.01 * c as f64 + 0.02 * r as f64)).unwrap();
        let pts = lift_equirect(&pano, &depth, &Vec3::zeros()).unwrap();
        for (i, p) in pts.positions.iter().enumerate() {
            let (u, v) = direction_to_equirect(p, w, h);
            let (col, row) = (i % w, i / w);
            let du = (u - col as f64).rem_euclid(w as f64);
            assert!(du.min(w as f64 - du) <= 0.5 && (v - row as f64).abs() <= 0.5);
            assert_abs_diff_eq!(p.norm(), depth.values[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn translation_only_subtracts_position() {
        let t = Vec3::new(1.0, 2.0, 3.0);
        let out = world_to_camera(&[Vec3::new(4.0, 5.0, 6.0)], &Pose::from_position(t));
        assert_eq!(out[0], Vec3::new(3.0, 3.0, 3.0));
        let same = world_to_camera(&[t], &Pose::identity());
        assert_eq!(same[0], t);
    }

    #[test]
    fn transform_matches_homogeneous_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pose = Pose::new(axis_angle(&Vec3::new(0.2, -0.7, 0.4), 1.1), Vec3::new(0.3, -2.0, 1.0)).unwrap();
        let pts: Vec<Vec3> = (0..1000).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 10.0).collect();
        let m = pose.matrix();
        for (p, q) in pts.iter().zip(world_to_camera(&pts, &pose)) {
            let h = m * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
            assert_abs_diff_eq!(q, h.xyz(), epsilon = 1e-9);
        }
    }

    #[test]
    fn projection_basics() {
        let k = cam().intrinsics;
        let (u, v) = project_points(&[Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.1, 0.2, 1.0), Vec3::new(0.2, 0.4, 2.0)], &k);
        assert_eq!((u[0], v[0]), (k.cx, k.cy));
        assert_abs_diff_eq!(u[1], u[2], epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], v[2], epsilon = 1e-12);
        let (u, _) = project_points(&[Vec3::new(0.0, 0.0, -1.0)], &k);
        assert!(u[0].is_nan());
    }

    #[test]
    fn visibility_cases() {
        let pts = cloud(vec![Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 2.0), Vec3::new(100.0, 0.0, 1.0)]);
        let vis = visibility_mask(&pts, &cam());
        assert_eq!(vis.m, vec![true, false, true]);
        assert_eq!(vis.m_front, vec![false, true, true]);
        assert_eq!(vis.m_bound, vec![false, true, false]);
        let kept = filter_moving_scene(&pts, &cam());
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn filter_extremes_and_idempotence() {
        let inside = cloud((0..50).map(|i| Vec3::new(0.0, 0.0, 1.0 + i as f64)).collect());
        assert!(filter_moving_scene(&inside, &cam()).is_empty());
        let behind = cloud((0..50).map(|i| Vec3::new(0.1, 0.0, -1.0 - i as f64)).collect());
        assert_eq!(filter_moving_scene(&behind, &cam()), behind);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mixed = cloud((0..2000).map(|_| Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect());
        let once = filter_moving_scene(&mixed, &cam());
        assert_eq!(filter_moving_scene(&once, &cam()), once);
    }

    #[test]
    fn fuse_counts_and_tags() {
        assert_eq!(fuse(&cloud(vec![Vec3::zeros()]), &[]), cloud(vec![Vec3::zeros()]));
        let a = cloud(vec![Vec3::zeros(); 100]).retag(SourceTag::Panorama);
        let b = cloud(vec![Vec3::new(0.0, 0.0, -1.0); 50]).retag(SourceTag::Moving(1));
        let f = fuse(&a, &[b]);
        assert_eq!(f.len(), 150);
        assert_eq!(f.tag_runs(), vec![(SourceTag::Panorama, 100), (SourceTag::Moving(1), 50)]);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(PointCloud::from_parts(vec![Vec3::new(f64::NAN, 0.0, 0.0)], vec![[0.0; 3]], vec![SourceTag::Panorama]).is_err());
        assert!(PointCloud::from_parts(vec![Vec3::zeros()], vec![[1.5, 0.0, 0.0]], vec![SourceTag::Panorama]).is_err());
        assert!(PointCloud::from_parts(vec![Vec3::zeros()], vec![], vec![]).is_err());
    }
}
