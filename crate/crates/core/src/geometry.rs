//! Pinhole cameras, rigid poses and the base/supplementary camera sets.
//!
//! Conventions: right-handed world, camera looks along +z, image u grows
//! rightward and v downward, so the camera frame is x right, y down, z forward.
//! A [`Pose`] stores the world-to-camera rotation together with the camera
//! position, so `x_cam = R (x_world - position)`.
//!
//! Continuous pixel coordinates put the center of pixel `(i, j)` at
//! `(i + 0.5, j + 0.5)`; pixel `i` covers `[i, i + 1)`.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality / determinant tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Compositions allowed before a rotation is re-projected onto SO(3).
pub const REORTHONORMALIZE_AFTER: u32 = 64;

/// Minimum vertical overlap between adjacent rings of base cameras, degrees.
pub const RING_OVERLAP_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the given horizontal field of view and the
    /// principal point at the image center.
    pub fn from_fov(fov_deg: f64, width: u32, height: u32) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::param(format!("fov must be in (0, 180) degrees, got {fov_deg}")));
        }
        let f = width as f64 / (2.0 * (fov_deg.to_radians() / 2.0).tan());
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::param("focal lengths must be positive and finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("image size must be non-zero"));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::param("principal point outside the image"));
        }
        Ok(())
    }

    /// Horizontal field of view in radians.
    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan()
    }

    pub fn vertical_fov(&self) -> f64 {
        2.0 * (self.height as f64 / (2.0 * self.fy)).atan()
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Ray through continuous pixel coordinates, scaled so that `z = 1`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Ray through the center of pixel `(col, row)`, with `z = 1`.
    #[inline]
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        self.ray(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Continuous pixel coordinates of a camera-frame point, `None` for `z <= 0`.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z > 0.0 {
            Some(((self.fx * p.x + self.cx * p.z) / p.z, (self.fy * p.y + self.cy * p.z) / p.z))
        } else {
            None
        }
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }

    /// Same field of view at `factor` times the resolution.
    pub fn scaled(&self, factor: u32) -> Self {
        let s = factor as f64;
        CameraIntrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: self.width * factor,
            height: self.height * factor,
        }
    }

    /// Same field of view at `1/factor` of the resolution; the size must divide evenly.
    pub fn downscaled(&self, factor: u32) -> Result<Self> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::param(format!(
                "{}x{} is not divisible by {factor}",
                self.width, self.height
            )));
        }
        let s = factor as f64;
        Ok(CameraIntrinsics {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: self.cx / s,
            cy: self.cy / s,
            width: self.width / factor,
            height: self.height / factor,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Pose {
    rotation: Mat3,
    position: Vec3,
    chain: u32,
}

/// Equal rotation and position; the composition counter is ignored.
impl PartialEq for Pose {
    fn eq(&self, other: &Self) -> bool {
        self.rotation == other.rotation && self.position == other.position
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Mat3::identity(),
            position: Vec3::zeros(),
            chain: 0,
        }
    }

    /// `rotation` is world-to-camera; `position` is the camera center in world units.
    pub fn new(rotation: Mat3, position: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::param("pose position must be finite"));
        }
        Ok(Pose {
            rotation,
            position,
            chain: 0,
        })
    }

    pub fn from_rotation(rotation: Mat3) -> Result<Self> {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn from_position(position: Vec3) -> Self {
        Pose {
            rotation: Mat3::identity(),
            position,
            chain: 0,
        }
    }

    /// Camera at `position` facing azimuth `yaw` (positive turns toward +x) and
    /// elevation `pitch` (positive looks up, toward -y), without roll.
    pub fn looking(yaw_rad: f64, pitch_rad: f64, position: Vec3) -> Self {
        Pose {
            rotation: yaw_pitch_rotation(yaw_rad, pitch_rad),
            position,
            chain: 0,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn position(&self) -> &Vec3 {
        &self.position
    }

    pub fn with_position(mut self, position: Vec3) -> Self {
        self.position = position;
        self
    }

    /// Translation part of the 4x4 world-to-camera matrix, `-R * position`.
    pub fn translation(&self) -> Vec3 {
        -(self.rotation * self.position)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation());
        m
    }

    #[inline]
    pub fn world_to_cam(&self, x: &Vec3) -> Vec3 {
        self.rotation * (x - self.position)
    }

    #[inline]
    pub fn cam_to_world(&self, x: &Vec3) -> Vec3 {
        self.rotation.tr_mul(x) + self.position
    }

    /// Camera axes expressed in world coordinates.
    pub fn right(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }

    pub fn down(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }

    pub fn up(&self) -> Vec3 {
        -self.down()
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn inverse(&self) -> Pose {
        Pose {
            rotation: self.rotation.transpose(),
            position: -(self.rotation * self.position),
            chain: self.chain,
        }
    }

    /// Pose of `self` expressed in the camera frame of `base`.
    pub fn relative_to(&self, base: &Pose) -> Pose {
        compose(self, &base.inverse())
    }

    pub fn same_rotation(&self, other: &Pose) -> bool {
        self.rotation == other.rotation
    }
}

/// `a ∘ b`: the transform that applies `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let rotation = a.rotation * b.rotation;
    let position = b.position + b.rotation.tr_mul(&a.position);
    let chain = a.chain + b.chain + 1;
    if chain > REORTHONORMALIZE_AFTER {
        Pose {
            rotation: nearest_rotation(&rotation),
            position,
            chain: 0,
        }
    } else {
        Pose {
            rotation,
            position,
            chain,
        }
    }
}

pub fn check_rotation(r: &Mat3) -> Result<()> {
    let gram = r.transpose() * r - Mat3::identity();
    if gram.iter().any(|v| !(v.abs() <= ROTATION_TOLERANCE)) {
        return Err(Error::param("rotation matrix is not orthonormal"));
    }
    if !((r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE) {
        return Err(Error::param("rotation matrix has determinant != +1"));
    }
    Ok(())
}

/// Closest rotation in the Frobenius sense (orthogonal polar factor).
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// World-to-camera rotation for a camera looking at azimuth `yaw` and elevation `pitch`.
pub fn yaw_pitch_rotation(yaw: f64, pitch: f64) -> Mat3 {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let forward = Vec3::new(cp * sy, -sp, cp * cy);
    let right = Vec3::new(cy, 0.0, -sy);
    let down = forward.cross(&right);
    Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

/// Rotation by `angle` about a unit `axis` (right-hand rule).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let unit = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&unit, angle).matrix()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    /// Unit offset along the camera's own axes, in world coordinates.
    pub fn axis(self, pose: &Pose) -> Vec3 {
        match self {
            Direction::Up => pose.up(),
            Direction::Down => pose.down(),
            Direction::Left => -pose.right(),
            Direction::Right => pose.right(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplementaryCamera {
    pub base_index: usize,
    pub direction: Direction,
    pub camera: Camera,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraSet {
    pub base: Vec<Camera>,
    pub supplementary: Vec<SupplementaryCamera>,
}

/// One ring of base cameras at a fixed elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    pub elevation_deg: f64,
    pub azimuths_deg: Vec<f64>,
}

/// Viewing directions for `count` base cameras with square `fov_deg` images.
///
/// Rings of constant elevation span `±(90 - fov/2 + overlap/2)` so the top and
/// bottom rings reach past the poles, with ring spacing at most `fov - 15°`
/// (or `fov / 2` for very narrow cameras) so adjacent rings overlap by at least
/// 15°. Every ring gets one camera and the rest are apportioned by `cos(elevation)`
/// with largest remainders (ties to the lower ring). Azimuths are uniform per
/// ring; odd rings are shifted by half a step. When `count` is smaller than
/// four cameras per ring a single ring at elevation 0 is used instead, so one
/// camera faces +z.
pub fn ring_layout(count: usize, fov_deg: f64) -> Vec<Ring> {
    let extent = 90.0 - fov_deg / 2.0 + RING_OVERLAP_DEG / 2.0;
    let max_step = if fov_deg > 2.0 * RING_OVERLAP_DEG {
        fov_deg - RING_OVERLAP_DEG
    } else {
        fov_deg / 2.0
    };
    let intervals = (2.0 * extent / max_step).ceil().max(1.0) as usize;
    let rings = intervals + 1;

    if count < 4 * rings {
        return vec![uniform_ring(0.0, count, false)];
    }

    let step = 2.0 * extent / intervals as f64;
    let elevations: Vec<f64> = (0..rings).map(|k| -extent + k as f64 * step).collect();
    let weights: Vec<f64> = elevations.iter().map(|e| e.to_radians().cos()).collect();
    let total: f64 = weights.iter().sum();
    let spare = count - rings;

    let quotas: Vec<f64> = weights.iter().map(|w| spare as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..rings).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let assigned: usize = alloc.iter().sum();
    for &k in order.iter().take(spare - assigned) {
        alloc[k] += 1;
    }

    elevations
        .iter()
        .zip(&alloc)
        .enumerate()
        .map(|(k, (&e, &n))| uniform_ring(e, n + 1, k % 2 == 1))
        .collect()
}

fn uniform_ring(elevation_deg: f64, n: usize, stagger: bool) -> Ring {
    let step = 360.0 / n as f64;
    let shift = if stagger { 0.5 } else { 0.0 };
    Ring {
        elevation_deg,
        azimuths_deg: (0..n).map(|j| (j as f64 + shift) * step).collect(),
    }
}

/// Base cameras at `center`, all facing outward per [`ring_layout`].
pub fn build_base_cameras(count: usize, fov_deg: f64, resolution: u32, center: Vec3) -> Result<CameraSet> {
    if count == 0 {
        return Err(Error::param("base camera count must be at least 1"));
    }
    if !center.iter().all(|v| v.is_finite()) {
        return Err(Error::param("camera center must be finite"));
    }
    let intrinsics = CameraIntrinsics::from_fov(fov_deg, resolution, resolution)?;
    let base = ring_layout(count, fov_deg)
        .into_iter()
        .flat_map(|ring| {
            let elevation = ring.elevation_deg.to_radians();
            ring.azimuths_deg.into_iter().map(move |az| Camera {
                pose: Pose::looking(az.to_radians(), elevation, center),
                intrinsics,
            })
        })
        .collect();
    Ok(CameraSet {
        base,
        supplementary: Vec::new(),
    })
}

/// Four translated copies (up, down, left, right) of every base camera.
pub fn build_supplementary_cameras(set: &CameraSet, offset: f64) -> Result<CameraSet> {
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::param(format!("supplementary offset must be positive, got {offset}")));
    }
    let supplementary = set
        .base
        .iter()
        .enumerate()
        .flat_map(|(base_index, cam)| {
            Direction::ALL.into_iter().map(move |direction| {
                let position = cam.pose.position() + offset * direction.axis(&cam.pose);
                SupplementaryCamera {
                    base_index,
                    direction,
                    camera: Camera {
                        pose: cam.pose.with_position(position),
                        intrinsics: cam.intrinsics,
                    },
                }
            })
        })
        .collect();
    Ok(CameraSet {
        base: set.base.clone(),
        supplementary,
    })
}

// ---------------------------------------------------------------------------
// JSON records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    pub rotation: [f64; 9],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let r = p.rotation();
        PoseRecord {
            position: [p.position().x, p.position().y, p.position().z],
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
        }
    }
}

impl TryFrom<&PoseRecord> for Pose {
    type Error = Error;

    fn try_from(rec: &PoseRecord) -> Result<Self> {
        Pose::new(Mat3::from_row_slice(&rec.rotation), Vec3::from(rec.position))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&CameraIntrinsics> for IntrinsicsRecord {
    fn from(k: &CameraIntrinsics) -> Self {
        IntrinsicsRecord {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl TryFrom<&IntrinsicsRecord> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: &IntrinsicsRecord) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(flatten)]
    pub pose: PoseRecord,
    #[serde(flatten)]
    pub intrinsics: IntrinsicsRecord,
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        CameraRecord {
            pose: (&c.pose).into(),
            intrinsics: (&c.intrinsics).into(),
        }
    }
}

impl TryFrom<&CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: &CameraRecord) -> Result<Self> {
        Ok(Camera {
            pose: (&r.pose).try_into()?,
            intrinsics: (&r.intrinsics).try_into()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplementaryRecord {
    pub base_index: usize,
    pub direction: Direction,
    #[serde(flatten)]
    pub camera: CameraRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraSetRecord {
    pub base: Vec<CameraRecord>,
    pub supplementary: Vec<SupplementaryRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moving: Vec<CameraRecord>,
}

impl From<&CameraSet> for CameraSetRecord {
    fn from(set: &CameraSet) -> Self {
        CameraSetRecord {
            base: set.base.iter().map(Into::into).collect(),
            supplementary: set
                .supplementary
                .iter()
                .map(|s| SupplementaryRecord {
                    base_index: s.base_index,
                    direction: s.direction,
                    camera: (&s.camera).into(),
                })
                .collect(),
            moving: Vec::new(),
        }
    }
}

impl TryFrom<&CameraSetRecord> for CameraSet {
    type Error = Error;

    fn try_from(rec: &CameraSetRecord) -> Result<Self> {
        let base = rec.base.iter().map(Camera::try_from).collect::<Result<Vec<_>>>()?;
        let supplementary = rec
            .supplementary
            .iter()
            .map(|s| {
                if s.base_index >= base.len() {
                    return Err(Error::param(format!("base_index {} out of range", s.base_index)));
                }
                Ok(SupplementaryCamera {
                    base_index: s.base_index,
                    direction: s.direction,
                    camera: (&s.camera).try_into()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CameraSet { base, supplementary })
    }
}

impl CameraSet {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(&CameraSetRecord::from(self))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: CameraSetRecord = serde_json::from_str(text)?;
        CameraSet::try_from(&rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r = axis_angle(&(axis + Vec3::new(0.0, 0.0, 1e-3)), rng.gen_range(-3.0..3.0));
        let c = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        Pose::new(r, c).unwrap()
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_pose(&mut rng);
            let q = compose(&Pose::identity(), &p);
            assert_abs_diff_eq!(q.rotation(), p.rotation(), epsilon = 1e-15);
            assert_abs_diff_eq!(q.position(), p.position(), epsilon = 1e-15);
            let id = compose(&p, &p.inverse());
            assert_abs_diff_eq!(*id.rotation(), Mat3::identity(), epsilon = 1e-9);
            assert_abs_diff_eq!(*id.position(), Vec3::zeros(), epsilon = 1e-9);
        }
    }

    #[test]
    fn two_quarter_yaws_make_a_half_turn() {
        let yaw90 = Pose::from_rotation(yaw_pitch_rotation(std::f64::consts::FRAC_PI_2, 0.0)).unwrap();
        // Hand-multiplied: the 90° yaw is [[0,0,-1],[0,1,0],[1,0,0]]; its square is diag(-1, 1, -1).
        assert_abs_diff_eq!(
            *yaw90.rotation(),
            Mat3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        let half = compose(&yaw90, &yaw90);
        assert_abs_diff_eq!(*half.rotation(), Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0)), epsilon = 1e-9);
        let direct = yaw_pitch_rotation(std::f64::consts::PI, 0.0);
        assert_abs_diff_eq!(*half.rotation(), direct, epsilon = 1e-9);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let ab = compose(&a, &b);
        assert_abs_diff_eq!(ab.matrix(), a.matrix() * b.matrix(), epsilon = 1e-9);
    }

    #[test]
    fn long_chains_stay_orthonormal() {
        let step = Pose::from_rotation(axis_angle(&Vec3::new(0.3, 1.0, -0.2), 0.0123)).unwrap();
        let mut p = Pose::identity();
        for _ in 0..10_000 {
            p = compose(&step, &p);
        }
        check_rotation(p.rotation()).unwrap();
        assert!(p.chain <= REORTHONORMALIZE_AFTER);
    }

    #[test]
    fn world_cam_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = random_pose(&mut rng);
            for _ in 0..1000 {
                let x = Vec3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
                assert_abs_diff_eq!(p.world_to_cam(&p.cam_to_world(&x)), x, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn intrinsics_from_fov() {
        let k = CameraIntrinsics::from_fov(60.0, 512, 512).unwrap();
        assert_abs_diff_eq!(k.fx, 443.40500673763256, epsilon = 1e-9);
        assert_eq!(k.fx, k.fy);
        for fov in [1.0, 30.0, 60.0, 100.0, 179.0] {
            let k = CameraIntrinsics::from_fov(fov, 640, 480).unwrap();
            assert_abs_diff_eq!(k.horizontal_fov(), f64::to_radians(fov), epsilon = 1e-9);
        }
        assert!(CameraIntrinsics::from_fov(0.0, 512, 512).is_err());
        assert!(CameraIntrinsics::from_fov(180.0, 512, 512).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, 512.0, 10.0, 512, 512).is_err());
    }

    #[test]
    fn base_cameras_default_rig() {
        let set = build_base_cameras(80, 60.0, 512, Vec3::new(0.1, -0.2, 0.3)).unwrap();
        assert_eq!(set.base.len(), 80);
        let p0 = *set.base[0].pose.position();
        assert!(set.base.iter().all(|c| *c.pose.position() == p0));
        assert_abs_diff_eq!(set.base[0].intrinsics.fx, 443.405, epsilon = 1e-3);
        let rings = ring_layout(80, 60.0);
        let counts: Vec<usize> = rings.iter().map(|r| r.azimuths_deg.len()).collect();
        assert_eq!(counts, vec![12, 28, 28, 12]);
        for pair in rings.windows(2) {
            let step = pair[1].elevation_deg - pair[0].elevation_deg;
            assert!(60.0 - step >= RING_OVERLAP_DEG - 1e-12);
        }
        // top ring reaches past the pole
        assert!(rings.last().unwrap().elevation_deg + 30.0 > 90.0);
    }

    #[test]
    fn single_and_four_camera_layouts() {
        let one = build_base_cameras(1, 60.0, 64, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(one.base[0].pose.forward(), Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);

        let four = build_base_cameras(4, 60.0, 64, Vec3::zeros()).unwrap();
        let az: Vec<f64> = ring_layout(4, 60.0)[0].azimuths_deg.clone();
        assert_eq!(az, vec![0.0, 90.0, 180.0, 270.0]);
        for a in &four.base {
            for b in &four.base {
                let d = a.pose.forward().dot(&b.pose.forward());
                let near = |t: f64| (d - t).abs() < 1e-12;
                assert!(near(0.0) || near(-1.0) || near(1.0));
            }
        }
        assert!(build_base_cameras(0, 60.0, 64, Vec3::zeros()).is_err());
        assert!(build_base_cameras(4, 190.0, 64, Vec3::zeros()).is_err());
    }

    #[test]
    fn supplementary_offsets() {
        // Base looking along +z with world up = +y: a half-turn roll about z.
        let rolled = Pose::new(Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let k = CameraIntrinsics::from_fov(60.0, 32, 32).unwrap();
        let set = CameraSet {
            base: vec![Camera { pose: rolled, intrinsics: k }],
            supplementary: vec![],
        };
        let full = build_supplementary_cameras(&set, 0.1).unwrap();
        assert_eq!(full.supplementary.len(), 4);
        let up = full.supplementary.iter().find(|s| s.direction == Direction::Up).unwrap();
        assert_abs_diff_eq!(*up.camera.pose.position(), Vec3::new(1.0, 2.1, 3.0), epsilon = 1e-15);
        assert!(build_supplementary_cameras(&set, 0.0).is_err());
        assert!(build_supplementary_cameras(&set, -1.0).is_err());
    }

    #[test]
    fn supplementary_offsets_follow_rotated_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = CameraIntrinsics::from_fov(60.0, 32, 32).unwrap();
        let base: Vec<Camera> = (0..10).map(|_| Camera { pose: random_pose(&mut rng), intrinsics: k }).collect();
        let full = build_supplementary_cameras(&CameraSet { base, supplementary: vec![] }, 0.37).unwrap();
        assert_eq!(full.supplementary.len(), 40);
        for s in &full.supplementary {
            let b = &full.base[s.base_index];
            // oracle: rotate the camera-frame unit axis into the world
            let local = match s.direction {
                Direction::Up => Vec3::new(0.0, -1.0, 0.0),
                Direction::Down => Vec3::new(0.0, 1.0, 0.0),
                Direction::Left => Vec3::new(-1.0, 0.0, 0.0),
                Direction::Right => Vec3::new(1.0, 0.0, 0.0),
            };
            let expected = b.pose.position() + 0.37 * (b.pose.rotation().transpose() * local);
            assert_abs_diff_eq!(*s.camera.pose.position(), expected, epsilon = 1e-12);
            assert_abs_diff_eq!((s.camera.pose.position() - b.pose.position()).norm(), 0.37, epsilon = 1e-9);
            assert!(s.camera.pose.same_rotation(&b.pose));
        }
    }

    #[test]
    fn camera_set_json_round_trip() {
        let set = build_base_cameras(20, 60.0, 64, Vec3::new(0.1, 0.2, 0.3)).unwrap();
        let set = build_supplementary_cameras(&set, 0.05).unwrap();
        let text = set.to_json().unwrap();
        assert!(text.starts_with("{\"base\":[{\"position\":["));
        let first_fields: Vec<&str> = ["\"position\"", "\"rotation\"", "\"fx\"", "\"fy\"", "\"cx\"", "\"cy\"", "\"width\"", "\"height\""]
            .into_iter()
            .collect();
        let mut last = 0;
        for f in first_fields {
            let at = text.find(f).unwrap();
            assert!(at >= last, "{f} out of order");
            last = at;
        }
        assert!(text.contains("\"direction\":\"up\""));
        let back = CameraSet::from_json(&text).unwrap();
        assert_eq!(back, set);
    }
}
