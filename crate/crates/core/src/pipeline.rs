//! Stage-by-stage orchestration over plain files.
//!
//! Every stage reads the outputs of earlier stages from the output directory,
//! writes its own files under `<out>/<stage>/` and records a `stage_manifest.json`
//! with SHA-256 hashes of its inputs, outputs and the configuration it used.
//! A stage whose manifest still matches is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{TrainingBundle, DEFAULT_STAGE_BOUNDARY};
use crate::depthalign::{scale_factor_and_propagate, smooth_mask_edges, solve_disparity_alignment, rectify_depth};
use crate::error::{Error, Result};
use crate::generators::{AnalyticRoom, GeneratorSuite, RemoteClient};
use crate::geometry::{build_base_cameras, build_supplementary_cameras, Camera, CameraRecord, CameraSet, CameraSetRecord, Pose, Vec3};
use crate::io::{read_depth_pfm, read_equirect, read_mask_png, read_ply, read_rgb_png, write_depth_pfm, write_equirect, write_mask_png, write_ply, write_rgb_png};
use crate::panorama::{run_panorama_loop, PanoramaPlan};
use crate::pointcloud::{filter_moving_scene, fuse, lift_equirect, lift_perspective, PointCloud, SourceTag};
use crate::projection::{equirect_depth_to_perspective, equirect_to_perspective};
use crate::raster::{psnr, DepthMap, MaskKind, PerspectiveImage, ViewMask};
use crate::splat::{pointcloud_to_gaussians, render, RadiusRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Compose,
    Lift,
    Supp,
    Move,
    Align,
    Fuse,
    Render,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Compose,
        Stage::Lift,
        Stage::Supp,
        Stage::Move,
        Stage::Align,
        Stage::Fuse,
        Stage::Render,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Compose => "compose",
            Stage::Lift => "lift",
            Stage::Supp => "supp",
            Stage::Move => "move",
            Stage::Align => "align",
            Stage::Fuse => "fuse",
            Stage::Render => "render",
            Stage::Export => "export",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Compose => &[],
            Stage::Lift => &[Stage::Compose],
            Stage::Supp => &[Stage::Compose, Stage::Lift],
            Stage::Move => &[Stage::Supp],
            Stage::Align => &[Stage::Supp, Stage::Move],
            Stage::Fuse => &[Stage::Lift, Stage::Move, Stage::Align],
            Stage::Render => &[Stage::Lift, Stage::Supp, Stage::Fuse],
            Stage::Export => &[Stage::Supp, Stage::Fuse],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::param(format!("unknown stage {s:?}")))
    }
}

// ---------------------------------------------------------------------------
// Configuration

fn default_count() -> usize {
    80
}
fn default_camera_fov() -> f64 {
    60.0
}
fn default_camera_resolution() -> u32 {
    512
}
fn default_boundary() -> u32 {
    DEFAULT_STAGE_BOUNDARY
}
fn default_frame_count() -> usize {
    25
}
fn default_sample_count() -> usize {
    8
}
fn default_alpha() -> f64 {
    0.9
}
fn default_pano_depth() -> f64 {
    2.0
}
fn default_timeout() -> f64 {
    300.0
}
fn default_superres_factor() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_camera_fov")]
    pub fov_deg: f64,
    #[serde(default = "default_camera_resolution")]
    pub resolution: u32,
    /// Supplementary offset in world units; defaults to 5% of the median
    /// panorama depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            count: default_count(),
            fov_deg: default_camera_fov(),
            resolution: default_camera_resolution(),
            offset: None,
        }
    }
}

/// A trajectory waypoint relative to the initial camera of a moving scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
}

impl Waypoint {
    pub fn pose(&self) -> Pose {
        Pose::looking(self.yaw_deg.to_radians(), self.pitch_deg.to_radians(), Vec3::from(self.position))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingSceneConfig {
    /// Base camera whose view starts the scene.
    pub initial_view: usize,
    pub trajectory: Vec<Waypoint>,
    #[serde(default = "default_frame_count")]
    pub frame_count: usize,
    /// Frames kept for reconstruction, spread evenly and always including frame 0.
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    #[serde(default)]
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum GeneratorConfig {
    Stub {
        #[serde(default = "default_pano_depth")]
        pano_depth: f64,
    },
    /// Stubs with depth and moving scenes taken from an analytic room.
    Analytic { room: RoomConfig },
    Remote {
        /// Falls back to the `PANOSCENE_ENDPOINT` environment variable.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default = "default_superres_factor")]
        superres_factor: u32,
    },
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Stub {
            pano_depth: default_pano_depth(),
        }
    }
}

impl GeneratorConfig {
    pub fn build(&self, seed: u64) -> Result<GeneratorSuite> {
        match self {
            GeneratorConfig::Stub { pano_depth } => Ok(GeneratorSuite::stub(*pano_depth)),
            GeneratorConfig::Analytic { room } => Ok(GeneratorSuite::analytic(AnalyticRoom::new(Vec3::from(room.center), room.radius, room.seed))),
            GeneratorConfig::Remote {
                endpoint,
                timeout_s,
                superres_factor,
            } => {
                let url = match endpoint {
                    Some(u) => u.clone(),
                    None => std::env::var(crate::generators::remote::ENDPOINT_ENV)
                        .map_err(|_| Error::param("remote generators need an endpoint"))?,
                };
                let timeout = Duration::from_secs_f64(*timeout_s);
                let client = RemoteClient::new(&url, timeout).with_superres_factor(*superres_factor).with_seed(seed);
                Ok(GeneratorSuite::from_remote(client))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            GeneratorConfig::Stub { pano_depth } if !(pano_depth.is_finite() && *pano_depth > 0.0) => {
                Err(Error::param("stub panorama depth must be positive"))
            }
            GeneratorConfig::Analytic { room } if !(room.radius.is_finite() && room.radius > 0.0) => {
                Err(Error::param("room radius must be positive"))
            }
            GeneratorConfig::Remote { timeout_s, superres_factor, .. } if !(*timeout_s > 0.0) || *superres_factor == 0 => {
                Err(Error::param("remote timeout and super-resolution factor must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Base cameras to render; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<Vec<usize>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_knn")]
    pub knn: usize,
    #[serde(default = "default_multiplier")]
    pub radius_multiplier: f64,
    /// Floor on each Gaussian's standard deviation. Defaults to half the
    /// panorama row spacing at the median depth, which closes the gaps
    /// between rows near the poles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_std: Option<f64>,
}

fn default_knn() -> usize {
    3
}
fn default_multiplier() -> f64 {
    1.0
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            views: None,
            alpha: default_alpha(),
            knn: default_knn(),
            radius_multiplier: default_multiplier(),
            min_std: None,
        }
    }
}

impl RenderConfig {
    /// Radius rule for a panorama whose depth has median `median_depth` and
    /// `pano_height` rows.
    pub fn radius_rule(&self, median_depth: f64, pano_height: usize) -> RadiusRule {
        let auto = 0.5 * std::f64::consts::PI / pano_height as f64 * median_depth;
        RadiusRule {
            k: self.knn,
            multiplier: self.radius_multiplier,
            min_std: self.min_std.unwrap_or(auto),
            ..RadiusRule::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub plan: PanoramaPlan,
    #[serde(default)]
    pub cameras: CameraConfig,
    #[serde(default)]
    pub moving: Vec<MovingSceneConfig>,
    #[serde(default)]
    pub generators: GeneratorConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default = "default_boundary")]
    pub stage_boundary: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Forwarded to remote generators; the core itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(plan: PanoramaPlan) -> Self {
        PipelineConfig {
            plan,
            cameras: CameraConfig::default(),
            moving: Vec::new(),
            generators: GeneratorConfig::default(),
            render: RenderConfig::default(),
            stage_boundary: DEFAULT_STAGE_BOUNDARY,
            output_dir: None,
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = crate::json::read_file(path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        let c = &self.cameras;
        if c.count == 0 || c.resolution == 0 {
            return Err(Error::param("camera count and resolution must be positive"));
        }
        crate::geometry::CameraIntrinsics::from_fov(c.fov_deg, c.resolution, c.resolution)?;
        if let Some(o) = c.offset {
            if !(o.is_finite() && o > 0.0) {
                return Err(Error::param(format!("supplementary offset must be positive, got {o}")));
            }
        }
        for (i, m) in self.moving.iter().enumerate() {
            if m.initial_view >= c.count {
                return Err(Error::param(format!("moving scene {i}: initial view {} out of range", m.initial_view)));
            }
            if m.trajectory.is_empty() || m.frame_count == 0 || m.sample_count == 0 {
                return Err(Error::param(format!("moving scene {i}: empty trajectory, frame or sample count")));
            }
            if m.trajectory.iter().any(|w| !w.position.iter().chain([&w.yaw_deg, &w.pitch_deg]).all(|v| v.is_finite())) {
                return Err(Error::param(format!("moving scene {i}: non-finite waypoint")));
            }
        }
        if let Some(views) = &self.render.views {
            if let Some(v) = views.iter().find(|&&v| v >= c.count) {
                return Err(Error::param(format!("render view {v} out of range")));
            }
        }
        if !(self.render.alpha > 0.0 && self.render.alpha <= 1.0) || self.render.knn == 0 || self.render.min_std.is_some_and(|m| !(m >= 0.0)) {
            return Err(Error::param("render alpha must be in (0, 1] and knn positive"));
        }
        self.generators.validate()
    }

    /// Configuration that a stage's outputs depend on.
    fn stage_section(&self, stage: Stage) -> serde_json::Value {
        use serde_json::json;
        match stage {
            Stage::Compose => json!({ "plan": self.plan, "generators": self.generators }),
            Stage::Lift => json!({ "generators": self.generators }),
            Stage::Supp => json!({ "cameras": self.cameras, "generators": self.generators }),
            Stage::Move => json!({ "moving": self.moving, "generators": self.generators }),
            Stage::Align => json!({ "moving": self.moving }),
            Stage::Fuse => json!({ "moving": self.moving }),
            Stage::Render => json!({ "render": self.render }),
            Stage::Export => json!({ "stage_boundary": self.stage_boundary }),
        }
    }
}

/// Indices of `n` frames spread evenly over `m`, starting with 0.
pub fn sample_frames(m: usize, n: usize) -> Vec<usize> {
    if n >= m {
        return (0..m).collect();
    }
    if n == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..n).map(|j| ((j * (m - 1)) as f64 / (n - 1) as f64).round() as usize).collect();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// Manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn manifest_path(out: &Path, stage: Stage) -> PathBuf {
    out.join(stage.name()).join("stage_manifest.json")
}

pub fn read_manifest(out: &Path, stage: Stage) -> Result<StageManifest> {
    crate::json::read_file(&manifest_path(out, stage))
}

fn rel_key(out: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(out).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// True when every recorded hash matches the file on disk.
pub fn verify_manifest(out: &Path, manifest: &StageManifest) -> Result<bool> {
    for (key, hash) in &manifest.outputs {
        match sha256_file(&out.join(key)) {
            Ok(h) if &h == hash => {}
            Ok(_) | Err(Error::MissingArtifact(_)) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Progress and locking

#[derive(Debug, Clone, Serialize)]
pub struct ProgressEvent {
    pub stage: Stage,
    /// `start`, `done` or `skipped`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
}

/// Exclusive ownership of an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".panoscene.lock";

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        let path = out.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                writeln!(f, "{}", std::process::id())?;
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Io(std::io::Error::new(
                e.kind(),
                format!("{} is locked by another run (remove {} if it is stale)", out.display(), path.display()),
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// ---------------------------------------------------------------------------
// Pipeline

pub struct Pipeline {
    config: PipelineConfig,
    out: PathBuf,
    gen: GeneratorSuite,
    progress: Option<Box<dyn Fn(&ProgressEvent) + Send + Sync>>,
    _lock: OutputLock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

impl Pipeline {
    /// Validate the configuration and lock `out`.
    pub fn new(config: PipelineConfig, out: &Path) -> Result<Self> {
        let gen = config.generators.build(config.seed)?;
        Self::with_generators(config, out, gen)
    }

    /// Like [`Pipeline::new`] with an explicit generator suite, which should
    /// correspond to `config.generators` for manifests to stay meaningful.
    pub fn with_generators(config: PipelineConfig, out: &Path, gen: GeneratorSuite) -> Result<Self> {
        config.validate()?;
        let lock = OutputLock::acquire(out)?;
        Ok(Pipeline {
            config,
            out: out.to_path_buf(),
            gen,
            progress: None,
            _lock: lock,
        })
    }

    pub fn on_progress(mut self, f: impl Fn(&ProgressEvent) + Send + Sync + 'static) -> Self {
        self.progress = Some(Box::new(f));
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn emit(&self, stage: Stage, status: &'static str, elapsed: Option<Duration>) {
        if let Some(f) = &self.progress {
            f(&ProgressEvent {
                stage,
                status,
                elapsed_s: elapsed.map(|d| d.as_secs_f64()),
            });
        }
    }

    pub fn run_all(&self) -> Result<()> {
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        let mut inputs = BTreeMap::new();
        for &dep in stage.dependencies() {
            let manifest = read_manifest(&self.out, dep)?;
            for key in manifest.outputs.keys() {
                inputs.insert(key.clone(), sha256_file(&self.out.join(key))?);
            }
        }
        if stage == Stage::Compose {
            if let Some(seed) = &self.config.plan.seed_image {
                inputs.insert(seed.to_string_lossy().into_owned(), sha256_file(seed)?);
            }
        }
        let section = crate::json::to_string(&self.config.stage_section(stage))?;
        let config_sha256 = hex::encode(Sha256::digest(section.as_bytes()));

        if let Ok(previous) = read_manifest(&self.out, stage) {
            if previous.config_sha256 == config_sha256 && previous.inputs == inputs && verify_manifest(&self.out, &previous)? {
                log::info!("{}: up to date", stage.name());
                self.emit(stage, "skipped", None);
                return Ok(StageOutcome::Skipped);
            }
        }

        log::info!("{}: running", stage.name());
        self.emit(stage, "start", None);
        let started = Instant::now();
        let dir = self.out.join(stage.name());
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let written = match stage {
            Stage::Compose => self.compose(&dir)?,
            Stage::Lift => self.lift(&dir)?,
            Stage::Supp => self.supp(&dir)?,
            Stage::Move => self.moving(&dir)?,
            Stage::Align => self.align(&dir)?,
            Stage::Fuse => self.fuse(&dir)?,
            Stage::Render => self.render(&dir)?,
            Stage::Export => self.export(&dir)?,
        };
        let mut outputs = BTreeMap::new();
        for path in written {
            outputs.insert(rel_key(&self.out, &path), sha256_file(&path)?);
        }
        let manifest = StageManifest {
            stage,
            config_sha256,
            inputs,
            outputs,
        };
        crate::json::write_file(&manifest_path(&self.out, stage), &manifest)?;
        self.emit(stage, "done", Some(started.elapsed()));
        Ok(StageOutcome::Ran)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn base_cameras(&self) -> Result<CameraSet> {
        let rec: CameraSetRecord = crate::json::read_file(&self.path("supp/cameras.json"))?;
        CameraSet::try_from(&rec)
    }

    fn compose(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let result = run_panorama_loop(&self.config.plan, &self.gen)?;
        let mut written = Vec::new();
        for (name, pano) in [("panorama", &result.panorama), ("composed", &result.composed)] {
            let p = dir.join(format!("{name}.png"));
            write_equirect(&p, pano)?;
            written.push(crate::io::sidecar_path(&p));
            written.push(p);
        }
        let p = dir.join("pole_mask.png");
        write_mask_png(&p, &result.pole_mask)?;
        written.push(p);
        fs::create_dir_all(dir.join("views"))?;
        let mut cams = Vec::new();
        for (i, v) in result.views.iter().enumerate() {
            let p = dir.join("views").join(format!("view_{i:04}.png"));
            write_rgb_png(&p, v.width(), v.height(), &v.pixels, &v.valid)?;
            written.push(p);
            cams.push(CameraRecord::from(&Camera {
                pose: v.pose,
                intrinsics: v.intrinsics,
            }));
        }
        let p = dir.join("views").join("cameras.json");
        crate::json::write_file(&p, &cams)?;
        written.push(p);
        Ok(written)
    }

    fn lift(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let pano = read_equirect(&self.path("compose/panorama.png"))?;
        let depth = self.gen.depth_estimator.estimate_pano_depth(&pano)?;
        if !depth.same_shape(pano.width, pano.height) {
            return Err(Error::Contract("panorama depth size differs from the panorama".into()));
        }
        let cloud = lift_equirect(&pano, &depth, &Vec3::zeros())?;
        let d = dir.join("depth.pfm");
        write_depth_pfm(&d, &depth)?;
        let p = dir.join("points.ply");
        write_ply(&p, &cloud)?;
        Ok(vec![d, p])
    }

    fn supp(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let pano = read_equirect(&self.path("compose/panorama.png"))?;
        let depth = read_depth_pfm(&self.path("lift/depth.pfm"))?;
        let c = &self.config.cameras;
        let offset = match c.offset {
            Some(o) => o,
            None => 0.05 * depth.median().ok_or_else(|| Error::Degenerate("panorama depth has no valid pixel".into()))?,
        };
        // The panorama was lifted around the origin, which is where its
        // cloud is centered.
        let base = build_base_cameras(c.count, c.fov_deg, c.resolution, Vec3::zeros())?;
        let set = build_supplementary_cameras(&base, offset)?;

        let mut written = Vec::new();
        let p = dir.join("cameras.json");
        crate::json::write_file(&p, &CameraSetRecord::from(&set))?;
        written.push(p);
        for sub in ["base", "supp", "masks"] {
            fs::create_dir_all(dir.join(sub))?;
        }

        let mut views = Vec::with_capacity(set.base.len());
        for (i, cam) in set.base.iter().enumerate() {
            let img = equirect_to_perspective(&pano, cam);
            let d = equirect_depth_to_perspective(&depth, cam)?;
            let p = dir.join("base").join(format!("base_{i:04}.png"));
            write_rgb_png(&p, img.width(), img.height(), &img.pixels, &img.valid)?;
            written.push(p);
            let p = dir.join("base").join(format!("base_{i:04}.pfm"));
            write_depth_pfm(&p, &d)?;
            written.push(p);
            views.push((img, d));
        }
        for (j, s) in set.supplementary.iter().enumerate() {
            let (img, d) = &views[s.base_index];
            let rel = s.camera.pose.relative_to(&img.pose);
            let (warped, mask) = self
                .gen
                .warp_refiner
                .warp_refine(img, d, &rel, &s.camera.intrinsics)
                .map_err(|e| e.at_view(j))?;
            if warped.width() != s.camera.intrinsics.width as usize || mask.width != warped.width() || mask.height != warped.height() {
                return Err(Error::Contract("warp refiner returned the wrong size".into()).at_view(j));
            }
            let p = dir.join("supp").join(format!("supp_{j:04}.png"));
            write_rgb_png(&p, warped.width(), warped.height(), &warped.pixels, &warped.valid)?;
            written.push(p);
            let p = dir.join("masks").join(format!("supp_{j:04}.png"));
            write_mask_png(&p, &mask)?;
            written.push(p);
        }
        Ok(written)
    }

    fn load_view(&self, rel: &str, cam: &Camera) -> Result<PerspectiveImage> {
        let path = self.path(rel);
        let (pixels, valid, w, h) = read_rgb_png(&path)?;
        if (w, h) != (cam.intrinsics.width as usize, cam.intrinsics.height as usize) {
            return Err(Error::format(&path, "image size differs from its camera"));
        }
        PerspectiveImage::new(cam.intrinsics, cam.pose, pixels, valid)
    }

    fn moving(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let set = self.base_cameras()?;
        let mut written = Vec::new();
        for (s, scene_cfg) in self.config.moving.iter().enumerate() {
            let cam = set.base[scene_cfg.initial_view];
            let initial = self.load_view(&format!("supp/base/base_{:04}.png", scene_cfg.initial_view), &cam)?;
            let depth = read_depth_pfm(&self.path(&format!("supp/base/base_{:04}.pfm", scene_cfg.initial_view)))?;
            let trajectory: Vec<Pose> = scene_cfg.trajectory.iter().map(Waypoint::pose).collect();
            let views = self
                .gen
                .view_synthesizer
                .synthesize_views(&initial, &trajectory, scene_cfg.frame_count, Some(&depth))
                .map_err(|e| e.at_view(s))?;
            if views.frames.len() != scene_cfg.frame_count || views.depths.len() != scene_cfg.frame_count || views.poses.len() != scene_cfg.frame_count {
                return Err(Error::Contract(format!("expected {} frames", scene_cfg.frame_count)).at_view(s));
            }
            if views.poses[0] != initial.pose {
                return Err(Error::Contract("frame 0 is not posed at the initial camera".into()).at_view(s));
            }
            let scene = dir.join(format!("scene_{s:02}"));
            fs::create_dir_all(&scene)?;
            let cams: Vec<CameraRecord> = views
                .poses
                .iter()
                .map(|p| CameraRecord::from(&Camera { pose: *p, intrinsics: initial.intrinsics }))
                .collect();
            let record = FramesRecord {
                cameras: cams,
                sampled: sample_frames(scene_cfg.frame_count, scene_cfg.sample_count),
            };
            let p = scene.join("frames.json");
            crate::json::write_file(&p, &record)?;
            written.push(p);
            for (f, (img, d)) in views.frames.iter().zip(&views.depths).enumerate() {
                if !img.same_shape(&initial) || !d.same_shape(initial.width(), initial.height()) {
                    return Err(Error::Contract(format!("frame {f} has the wrong size")).at_view(s));
                }
                let p = scene.join(format!("frame_{f:04}.png"));
                write_rgb_png(&p, img.width(), img.height(), &img.pixels, &img.valid)?;
                written.push(p);
                let p = scene.join(format!("frame_{f:04}.pfm"));
                write_depth_pfm(&p, d)?;
                written.push(p);
            }
        }
        Ok(written)
    }

    fn frames_record(&self, s: usize) -> Result<FramesRecord> {
        crate::json::read_file(&self.path(&format!("move/scene_{s:02}/frames.json")))
    }

    fn align(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (s, scene_cfg) in self.config.moving.iter().enumerate() {
            let record = self.frames_record(s)?;
            let d = read_depth_pfm(&self.path(&format!("move/scene_{s:02}/frame_0000.pfm")))?;
            let d_p = read_depth_pfm(&self.path(&format!("supp/base/base_{:04}.pfm", scene_cfg.initial_view)))?;
            if !d.same_shape(d_p.width, d_p.height) {
                return Err(Error::param("moving-scene depth and panorama depth differ in size").at_view(s));
            }
            let overlap = ViewMask::new(
                d.width,
                d.height,
                d.valid.iter().zip(&d_p.valid).map(|(a, b)| *a && *b).collect(),
                MaskKind::Overlap,
            )?;
            let mut solution = solve_disparity_alignment(&d, &d_p, &overlap).map_err(|e| e.at_view(s))?;
            let d_hat = smooth_mask_edges(&rectify_depth(&d_p, &solution), &overlap)?;
            let later: Vec<DepthMap> = record.sampled[1..]
                .iter()
                .map(|f| read_depth_pfm(&self.path(&format!("move/scene_{s:02}/frame_{f:04}.pfm"))))
                .collect::<Result<_>>()?;
            let (gamma, scaled) = scale_factor_and_propagate(&d, &d_hat, &later).map_err(|e| e.at_view(s))?;
            solution.gamma = Some(gamma);
            log::info!("scene {s}: alpha {} beta {} gamma {gamma}", solution.alpha, solution.beta);

            let scene = dir.join(format!("scene_{s:02}"));
            fs::create_dir_all(&scene)?;
            let p = scene.join("alignment.json");
            fs::write(&p, solution.to_json()? + "\n")?;
            written.push(p);
            for (f, depth) in record.sampled.iter().zip(std::iter::once(&d_hat).chain(&scaled)) {
                let p = scene.join(format!("depth_{f:04}.pfm"));
                write_depth_pfm(&p, depth)?;
                written.push(p);
            }
        }
        Ok(written)
    }

    fn fuse(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let panorama = read_ply(&self.path("lift/points.ply"))?;
        let mut scenes = Vec::new();
        let mut moving_cams = Vec::new();
        let mut written = Vec::new();
        fs::create_dir_all(dir.join("moving"))?;
        for s in 0..self.config.moving.len() {
            let record = self.frames_record(s)?;
            let cams = record.cameras.iter().map(Camera::try_from).collect::<Result<Vec<_>>>()?;
            let mut cloud = PointCloud::default();
            for &f in &record.sampled {
                let cam = cams.get(f).ok_or_else(|| Error::format(self.path("move"), "sampled frame out of range"))?;
                let img = self.load_view(&format!("move/scene_{s:02}/frame_{f:04}.png"), cam)?;
                let depth = read_depth_pfm(&self.path(&format!("align/scene_{s:02}/depth_{f:04}.pfm")))?;
                cloud = fuse(&cloud, &[lift_perspective(&img, &depth, SourceTag::Moving(s as u32))?]);
                if f != 0 {
                    let p = dir.join("moving").join(format!("moving_{:04}.png", moving_cams.len()));
                    write_rgb_png(&p, img.width(), img.height(), &img.pixels, &img.valid)?;
                    written.push(p);
                    moving_cams.push(CameraRecord::from(cam));
                }
            }
            scenes.push(filter_moving_scene(&cloud, &cams[0]));
        }
        let fused = fuse(&panorama, &scenes);
        let p = dir.join("points.ply");
        write_ply(&p, &fused)?;
        written.push(p);
        let p = dir.join("moving_cameras.json");
        crate::json::write_file(&p, &moving_cams)?;
        written.push(p);
        Ok(written)
    }

    fn render(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let set = self.base_cameras()?;
        let cloud = read_ply(&self.path("fuse/points.ply"))?;
        let depth = read_depth_pfm(&self.path("lift/depth.pfm"))?;
        let median = depth.median().ok_or_else(|| Error::Degenerate("panorama depth has no valid pixel".into()))?;
        let rule = self.config.render.radius_rule(median, depth.height);
        let gaussians = pointcloud_to_gaussians(&cloud, self.config.render.alpha, &rule)?;
        let views: Vec<usize> = match &self.config.render.views {
            Some(v) => v.clone(),
            None => (0..set.base.len()).collect(),
        };
        let mut written = Vec::new();
        let mut summary = Vec::new();
        for i in views {
            let cam = set.base[i];
            let (img, _) = render(&gaussians, &cam);
            let reference = self.load_view(&format!("supp/base/base_{i:04}.png"), &cam)?;
            let p = dir.join(format!("base_{i:04}.png"));
            write_rgb_png(&p, img.width(), img.height(), &img.pixels, &img.valid)?;
            written.push(p);
            summary.push(RenderSummary {
                view: i,
                psnr_db: psnr(&img, &reference).ok().filter(|v| v.is_finite()),
            });
        }
        let p = dir.join("summary.json");
        crate::json::write_file(&p, &summary)?;
        written.push(p);
        Ok(written)
    }

    fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let cameras = self.base_cameras()?;
        let base_images = cameras
            .base
            .iter()
            .enumerate()
            .map(|(i, c)| self.load_view(&format!("supp/base/base_{i:04}.png"), c))
            .collect::<Result<Vec<_>>>()?;
        let supp_images = cameras
            .supplementary
            .iter()
            .enumerate()
            .map(|(j, s)| self.load_view(&format!("supp/supp/supp_{j:04}.png"), &s.camera))
            .collect::<Result<Vec<_>>>()?;
        let supp_masks = (0..cameras.supplementary.len())
            .map(|j| read_mask_png(&self.path(&format!("supp/masks/supp_{j:04}.png")), MaskKind::Occlusion))
            .collect::<Result<Vec<_>>>()?;
        let moving_records: Vec<CameraRecord> = crate::json::read_file(&self.path("fuse/moving_cameras.json"))?;
        let moving_cameras = moving_records.iter().map(Camera::try_from).collect::<Result<Vec<_>>>()?;
        let moving_images = moving_cameras
            .iter()
            .enumerate()
            .map(|(i, c)| self.load_view(&format!("fuse/moving/moving_{i:04}.png"), c))
            .collect::<Result<Vec<_>>>()?;
        let bundle = TrainingBundle {
            cameras,
            base_images,
            supp_images,
            supp_masks,
            moving_cameras,
            moving_images,
            points: read_ply(&self.path("fuse/points.ply"))?,
            stage_boundary: self.config.stage_boundary,
        };
        bundle.export(dir)
    }
}

/// Cameras of every synthesized frame and the indices kept for lifting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesRecord {
    pub cameras: Vec<CameraRecord>,
    pub sampled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub view: usize,
    /// Against the base view sampled from the panorama; absent when the
    /// images agree exactly or share no valid pixel.
    pub psnr_db: Option<f64>,
}
