//! The warp → inpaint → super-resolve loop that grows a panorama one
//! perspective view at a time.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::GeneratorSuite;
use crate::geometry::{yaw_pitch_rotation, CameraIntrinsics, Mat3, Pose, Vec3};
use crate::projection::{frustum_hit, perspective_to_equirect, pole_completion_mask, warp_rotate};
use crate::raster::{downsample_area, EquirectImage, MaskKind, PerspectiveImage, ViewMask};

/// One scheduled view, as a rotation away from the initial view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    #[serde(default)]
    pub instruction: String,
}

impl ScheduleEntry {
    pub fn new(yaw_deg: f64, pitch_deg: f64) -> Self {
        ScheduleEntry {
            yaw_deg,
            pitch_deg,
            instruction: String::new(),
        }
    }

    pub fn rotation(&self) -> Mat3 {
        yaw_pitch_rotation(self.yaw_deg.to_radians(), self.pitch_deg.to_radians())
    }
}

fn default_fov() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

fn default_resolution() -> u32 {
    512
}

fn default_pano_width() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaPlan {
    pub prompt: String,
    /// PNG used as the first view instead of generating it from the prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_image: Option<PathBuf>,
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default = "default_true")]
    pub superres: bool,
    /// Working resolution of each square view.
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_pano_width")]
    pub pano_width: usize,
}

/// Six views around the horizon 60° apart, then one looking 45° up and one
/// 45° down.
pub fn default_schedule() -> Vec<ScheduleEntry> {
    let mut s: Vec<ScheduleEntry> = (0..6).map(|i| ScheduleEntry::new(60.0 * i as f64, 0.0)).collect();
    s.push(ScheduleEntry::new(0.0, 45.0));
    s.push(ScheduleEntry::new(0.0, -45.0));
    s
}

impl PanoramaPlan {
    pub fn new(prompt: impl Into<String>) -> Self {
        PanoramaPlan {
            prompt: prompt.into(),
            seed_image: None,
            fov_deg: default_fov(),
            schedule: default_schedule(),
            superres: true,
            resolution: default_resolution(),
            pano_width: default_pano_width(),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.fov_deg, self.resolution, self.resolution)
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.schedule
            .iter()
            .map(|e| Pose::looking(e.yaw_deg.to_radians(), e.pitch_deg.to_radians(), Vec3::zeros()))
            .collect()
    }

    /// Text handed to the inpainter for view `i`.
    pub fn instruction(&self, i: usize) -> String {
        match self.schedule.get(i).map(|e| e.instruction.as_str()) {
            Some(extra) if !extra.is_empty() => format!("{}\n{}", self.prompt, extra),
            _ => self.prompt.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::param("view schedule is empty"));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::param(format!("fov {} outside (0, 180)", self.fov_deg)));
        }
        if self.pano_width < 2 || self.pano_width % 2 != 0 {
            return Err(Error::param(format!("panorama width {} must be even and at least 2", self.pano_width)));
        }
        let k = self.intrinsics()?;
        for (i, e) in self.schedule.iter().enumerate() {
            if !(e.yaw_deg.is_finite() && e.pitch_deg.is_finite()) {
                return Err(Error::param(format!("view {i}: non-finite angle")));
            }
            if i > 0 && !frustums_overlap(&k, &self.schedule[i - 1].rotation(), &e.rotation()) {
                return Err(Error::param(format!("view {i} does not overlap view {}", i - 1)));
            }
        }
        Ok(())
    }
}

/// Whether two cameras at one point with world-to-camera rotations `a` and
/// `b` see any common direction, tested on a 33x33 grid of `b`'s pixels.
pub fn frustums_overlap(k: &CameraIntrinsics, a: &Mat3, b: &Mat3) -> bool {
    const N: usize = 33;
    let b_to_a = a * b.transpose();
    (0..N * N).any(|i| {
        let u = (i % N) as f64 / (N - 1) as f64 * k.width as f64;
        let v = (i / N) as f64 / (N - 1) as f64 * k.height as f64;
        frustum_hit(k, &(b_to_a * k.ray(u, v))).is_some()
    })
}

/// True iff `after` equals `before` bit for bit everywhere outside `mask`.
pub fn verify_inpaint_contract(before: &PerspectiveImage, after: &PerspectiveImage, mask: &ViewMask) -> Result<bool> {
    if !before.same_shape(after) || mask.width != before.width() || mask.height != before.height() {
        return Err(Error::param("image and mask dimensions differ"));
    }
    let same = |a: &[f32; 3], b: &[f32; 3]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok((0..mask.bits.len())
        .filter(|&i| !mask.bits[i])
        .all(|i| before.valid[i] == after.valid[i] && same(&before.pixels[i], &after.pixels[i])))
}

#[derive(Debug, Clone)]
pub struct PanoramaResult {
    /// Final panorama after pole completion.
    pub panorama: EquirectImage,
    /// Composition of the views before pole completion.
    pub composed: EquirectImage,
    pub pole_mask: ViewMask,
    /// Recorded views, at super-resolved size when enabled.
    pub views: Vec<PerspectiveImage>,
}

/// Run the loop, loading the plan's seed image if it has one.
pub fn run_panorama_loop(plan: &PanoramaPlan, gen: &GeneratorSuite) -> Result<PanoramaResult> {
    let seed = match &plan.seed_image {
        Some(path) => {
            let (pixels, valid, w, h) = crate::io::read_rgb_png(path)?;
            let k = plan.intrinsics()?;
            if (w, h) != (k.width as usize, k.height as usize) {
                return Err(Error::param(format!(
                    "seed image is {w}x{h}, plan resolution is {}",
                    plan.resolution
                )));
            }
            Some(PerspectiveImage::new(k, plan.poses()[0], pixels, valid)?)
        }
        None => None,
    };
    run_panorama_loop_with_seed(plan, gen, seed)
}

pub fn run_panorama_loop_with_seed(plan: &PanoramaPlan, gen: &GeneratorSuite, seed: Option<PerspectiveImage>) -> Result<PanoramaResult> {
    plan.validate()?;
    let k = plan.intrinsics()?;
    let poses = plan.poses();
    let mut views = Vec::with_capacity(poses.len());
    let mut working: Option<PerspectiveImage> = None;

    for (i, pose) in poses.iter().enumerate() {
        log::info!("panorama view {}/{}", i + 1, poses.len());
        let (start, mask) = match (&working, i) {
            (None, 0) => match &seed {
                Some(s) => {
                    if s.intrinsics != k {
                        return Err(Error::param("seed image intrinsics do not match the plan").at_view(0));
                    }
                    let mut s = s.clone();
                    s.pose = *pose;
                    let mask = ViewMask::new(s.width(), s.height(), s.valid.iter().map(|v| !v).collect(), MaskKind::InpaintRegion)?;
                    (s, mask)
                }
                None => {
                    let blank = PerspectiveImage::new(k, *pose, vec![[0.0; 3]; (k.width * k.height) as usize], vec![false; (k.width * k.height) as usize])?;
                    let mask = ViewMask::new(blank.width(), blank.height(), vec![true; blank.pixels.len()], MaskKind::InpaintRegion)?;
                    (blank, mask)
                }
            },
            (Some(prev), _) => {
                let step = pose.rotation() * poses[i - 1].rotation().transpose();
                let (mut warped, mask) = warp_rotate(prev, &step);
                warped.pose = *pose;
                (warped, mask)
            }
            (None, _) => unreachable!(),
        };

        let view = if mask.is_empty() {
            start
        } else {
            let filled = gen.inpainter.inpaint(&start, &mask, &plan.instruction(i)).map_err(|e| e.at_view(i))?;
            if !verify_inpaint_contract(&start, &filled, &mask).map_err(|e| e.at_view(i))? {
                return Err(Error::Contract("inpainter changed pixels outside its mask".into()).at_view(i));
            }
            filled
        };
        check_shape(&view, &k).map_err(|e| e.at_view(i))?;

        if plan.superres {
            let factor = gen.super_resolver.factor();
            let hi = gen.super_resolver.upscale(&view).map_err(|e| e.at_view(i))?;
            if hi.width() != view.width() * factor as usize || hi.height() != view.height() * factor as usize {
                return Err(Error::Contract(format!("super-resolution did not scale by {factor}")).at_view(i));
            }
            let mut lo = downsample_area(&hi, factor).map_err(|e| e.at_view(i))?;
            lo.intrinsics = k;
            lo.pose = *pose;
            working = Some(lo);
            views.push(hi);
        } else {
            working = Some(view.clone());
            views.push(view);
        }
    }

    let composed = perspective_to_equirect(&views, plan.pano_width)?;
    let pole_mask = pole_completion_mask(&composed);
    let panorama = if pole_mask.is_empty() {
        composed.clone()
    } else {
        let out = gen.pano_inpainter.inpaint_pano(&composed, &pole_mask, &plan.prompt)?;
        if out.width != composed.width || out.height != composed.height {
            return Err(Error::Contract("panorama inpainter changed dimensions".into()));
        }
        let untouched = (0..pole_mask.bits.len())
            .filter(|&i| !pole_mask.bits[i])
            .all(|i| out.valid[i] == composed.valid[i] && out.pixels[i] == composed.pixels[i]);
        if !untouched {
            return Err(Error::Contract("panorama inpainter changed pixels outside the pole mask".into()));
        }
        out
    };
    Ok(PanoramaResult {
        panorama,
        composed,
        pole_mask,
        views,
    })
}

fn check_shape(view: &PerspectiveImage, k: &CameraIntrinsics) -> Result<()> {
    if view.width() != k.width as usize || view.height() != k.height as usize {
        return Err(Error::Contract(format!(
            "plugin returned {}x{}, expected {}x{}",
            view.width(),
            view.height(),
            k.width,
            k.height
        )));
    }
    Ok(())
}
