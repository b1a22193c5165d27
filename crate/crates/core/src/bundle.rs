//! On-disk training data for an external splat optimizer.
//!
//! ```text
//! cameras.json            base, supplementary and moving cameras
//! images/base_0000.png    one RGBA image per camera, alpha = validity
//! images/supp_0000.png
//! images/moving_0000.png
//! masks/supp_0000.png     occlusion mask of each supplementary view
//! points.ply              initial points
//! manifest.json           which views train in which stage
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraRecord, CameraSet, CameraSetRecord};
use crate::io::{read_mask_png, read_ply, read_rgb_png, write_mask_png, write_ply, write_rgb_png};
use crate::pointcloud::PointCloud;
use crate::raster::{MaskKind, PerspectiveImage, ViewMask};

/// Optimizer iteration at which the supplementary views join training.
pub const DEFAULT_STAGE_BOUNDARY: u32 = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub stage_boundary: u32,
    /// Views used from the first iteration.
    pub stage1: Vec<String>,
    /// Views added at `stage_boundary`.
    pub stage2: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBundle {
    pub cameras: CameraSet,
    pub base_images: Vec<PerspectiveImage>,
    pub supp_images: Vec<PerspectiveImage>,
    pub supp_masks: Vec<ViewMask>,
    pub moving_cameras: Vec<Camera>,
    pub moving_images: Vec<PerspectiveImage>,
    pub points: PointCloud,
    pub stage_boundary: u32,
}

pub fn view_id(kind: &str, i: usize) -> String {
    format!("{kind}_{i:04}")
}

impl TrainingBundle {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("base images", self.base_images.len(), self.cameras.base.len()),
            ("supplementary images", self.supp_images.len(), self.cameras.supplementary.len()),
            ("supplementary masks", self.supp_masks.len(), self.cameras.supplementary.len()),
            ("moving images", self.moving_images.len(), self.moving_cameras.len()),
        ];
        for (what, got, want) in counts {
            if got != want {
                return Err(Error::param(format!("{got} {what} for {want} cameras")));
            }
        }
        for (img, m) in self.supp_images.iter().zip(&self.supp_masks) {
            if (img.width(), img.height()) != (m.width, m.height) {
                return Err(Error::param("supplementary mask size differs from its image"));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> BundleManifest {
        let mut stage1: Vec<String> = (0..self.base_images.len()).map(|i| view_id("base", i)).collect();
        stage1.extend((0..self.moving_images.len()).map(|i| view_id("moving", i)));
        BundleManifest {
            stage_boundary: self.stage_boundary,
            stage1,
            stage2: (0..self.supp_images.len()).map(|i| view_id("supp", i)).collect(),
        }
    }

    /// Write the bundle under `dir` and return every file written, in a fixed order.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.validate()?;
        std::fs::create_dir_all(dir.join("images"))?;
        std::fs::create_dir_all(dir.join("masks"))?;
        let mut written = Vec::new();

        let mut record = CameraSetRecord::from(&self.cameras);
        record.moving = self.moving_cameras.iter().map(CameraRecord::from).collect();
        let path = dir.join("cameras.json");
        crate::json::write_file(&path, &record)?;
        written.push(path);

        let groups = [("base", &self.base_images), ("supp", &self.supp_images), ("moving", &self.moving_images)];
        for (kind, images) in groups {
            for (i, img) in images.iter().enumerate() {
                let path = dir.join("images").join(format!("{}.png", view_id(kind, i)));
                write_rgb_png(&path, img.width(), img.height(), &img.pixels, &img.valid)?;
                written.push(path);
            }
        }
        for (i, m) in self.supp_masks.iter().enumerate() {
            let path = dir.join("masks").join(format!("{}.png", view_id("supp", i)));
            write_mask_png(&path, m)?;
            written.push(path);
        }

        let path = dir.join("points.ply");
        write_ply(&path, &self.points)?;
        written.push(path);

        let path = dir.join("manifest.json");
        crate::json::write_file(&path, &self.manifest())?;
        written.push(path);
        Ok(written)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let record: CameraSetRecord = crate::json::read_file(&dir.join("cameras.json"))?;
        let cameras = CameraSet::try_from(&record)?;
        let moving_cameras = record.moving.iter().map(Camera::try_from).collect::<Result<Vec<_>>>()?;
        let manifest: BundleManifest = crate::json::read_file(&dir.join("manifest.json"))?;

        let load = |kind: &str, cams: &mut dyn Iterator<Item = Camera>| -> Result<Vec<PerspectiveImage>> {
            cams.enumerate()
                .map(|(i, cam)| {
                    let path = dir.join("images").join(format!("{}.png", view_id(kind, i)));
                    let (pixels, valid, w, h) = read_rgb_png(&path)?;
                    if (w, h) != (cam.intrinsics.width as usize, cam.intrinsics.height as usize) {
                        return Err(Error::format(&path, "image size differs from its camera"));
                    }
                    PerspectiveImage::new(cam.intrinsics, cam.pose, pixels, valid)
                })
                .collect()
        };
        let base_images = load("base", &mut cameras.base.iter().copied())?;
        let supp_images = load("supp", &mut cameras.supplementary.iter().map(|s| s.camera))?;
        let moving_images = load("moving", &mut moving_cameras.iter().copied())?;
        let supp_masks = (0..cameras.supplementary.len())
            .map(|i| read_mask_png(&dir.join("masks").join(format!("{}.png", view_id("supp", i))), MaskKind::Occlusion))
            .collect::<Result<Vec<_>>>()?;
        let points = read_ply(&dir.join("points.ply"))?;

        let bundle = TrainingBundle {
            cameras,
            base_images,
            supp_images,
            supp_masks,
            moving_cameras,
            moving_images,
            points,
            stage_boundary: manifest.stage_boundary,
        };
        if bundle.manifest() != manifest {
            return Err(Error::format(dir.join("manifest.json"), "view lists do not match the files"));
        }
        Ok(bundle)
    }
}
