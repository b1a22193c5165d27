//! A procedurally colored spherical room with exact depth, used by the stub
//! generators and by tests as ground truth.

use crate::geometry::{Camera, Vec3};
use crate::projection::pixel_direction;
use crate::raster::{DepthMap, EquirectImage, PerspectiveImage, Rgb};

/// Smooth color field on the unit sphere, seeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorField {
    linear: [Vec3; 3],
    wave: [Vec3; 3],
    phase: [f64; 3],
}

impl ColorField {
    pub fn new(seed: u64) -> Self {
        let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
        let mut next = || {
            // splitmix64
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut unit = || {
            let z = 2.0 * next() - 1.0;
            let a = 2.0 * std::f64::consts::PI * next();
            let r = (1.0 - z * z).sqrt();
            Vec3::new(r * a.cos(), r * a.sin(), z)
        };
        let linear = [unit(), unit(), unit()];
        let wave = [unit(), unit(), unit()];
        let phase = [0.0, 2.1, 4.2];
        ColorField { linear, wave, phase }
    }

    /// Color of unit direction `d`; every channel stays within `[0.05, 0.95]`.
    pub fn color(&self, d: &Vec3) -> Rgb {
        std::array::from_fn(|c| (0.5 + 0.3 * self.linear[c].dot(d) + 0.15 * (3.0 * self.wave[c].dot(d) + self.phase[c]).sin()) as f32)
    }
}

/// Hash of free text, for seeding deterministic stubs from prompts.
pub fn text_seed(text: &str) -> u64 {
    // FNV-1a
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticRoom {
    pub center: Vec3,
    pub radius: f64,
    pub field: ColorField,
}

impl AnalyticRoom {
    pub fn new(center: Vec3, radius: f64, seed: u64) -> Self {
        AnalyticRoom {
            center,
            radius,
            field: ColorField::new(seed),
        }
    }

    /// Ray parameter of the wall hit from `origin` along `dir`, if any.
    pub fn hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let oc = origin - self.center;
        let a = dir.norm_squared();
        let b = oc.dot(dir);
        let c = oc.norm_squared() - self.radius * self.radius;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let t = (-b + disc.sqrt()) / a;
        (t > 0.0).then_some(t)
    }

    /// Wall color seen along `dir` from `origin`.
    pub fn color_along(&self, origin: &Vec3, dir: &Vec3) -> Option<Rgb> {
        let t = self.hit(origin, dir)?;
        let p = origin + t * dir;
        Some(self.field.color(&((p - self.center) / self.radius)))
    }

    /// Pinhole view and its exact z-depth.
    pub fn render_view(&self, cam: &Camera) -> (PerspectiveImage, DepthMap) {
        let k = cam.intrinsics;
        let (w, h) = (k.width as usize, k.height as usize);
        let origin = *cam.pose.position();
        let mut pixels = Vec::with_capacity(w * h);
        let mut values = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                // camera-frame z of the ray is 1, so t is the z-depth
                let dir = cam.pose.rotation().tr_mul(&k.pixel_ray(col, row));
                match self.hit(&origin, &dir) {
                    Some(t) => {
                        let p = origin + t * dir;
                        pixels.push(self.field.color(&((p - self.center) / self.radius)));
                        values.push(t);
                        valid.push(true);
                    }
                    None => {
                        pixels.push([0.0; 3]);
                        values.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        let pix_valid = valid.clone();
        (
            PerspectiveImage {
                pixels,
                valid: pix_valid,
                intrinsics: k,
                pose: cam.pose,
            },
            DepthMap {
                width: w,
                height: h,
                values,
                valid,
            },
        )
    }

    /// Equirect panorama seen from `eye`, with ray distances.
    pub fn render_equirect(&self, width: usize, eye: &Vec3) -> (EquirectImage, DepthMap) {
        let height = width / 2;
        let mut pixels = Vec::with_capacity(width * height);
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                let d = pixel_direction(col as f64, row as f64, width, height);
                match self.hit(eye, &d) {
                    Some(t) => {
                        let p = eye + t * d;
                        pixels.push(self.field.color(&((p - self.center) / self.radius)));
                        values.push(t);
                        valid.push(true);
                    }
                    None => {
                        pixels.push([0.0; 3]);
                        values.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        (
            EquirectImage {
                width,
                height,
                pixels,
                valid: valid.clone(),
            },
            DepthMap {
                width,
                height,
                values,
                valid,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn colors_stay_in_range_and_depend_on_seed() {
        let a = ColorField::new(1);
        let b = ColorField::new(2);
        let d = Vec3::new(0.3, -0.5, 0.81).normalize();
        assert_ne!(a.color(&d), b.color(&d));
        for i in 0..1000 {
            let t = i as f64 * 0.37;
            let d = Vec3::new(t.sin() * (2.0 * t).cos(), (2.0 * t).sin(), t.cos() * (2.0 * t).cos()).normalize();
            assert!(a.color(&d).iter().all(|c| (0.05..=0.95).contains(c)));
        }
    }

    #[test]
    fn unit_room_from_center_has_unit_depth() {
        let room = AnalyticRoom::new(Vec3::zeros(), 1.0, 3);
        let (_, depth) = room.render_equirect(64, &Vec3::zeros());
        for v in depth.values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
    }
}
