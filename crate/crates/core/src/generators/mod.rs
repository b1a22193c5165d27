//! Contracts for the generative steps of the pipeline, with deterministic
//! stubs and an HTTP client for real back-ends.
//!
//! Every plugin keeps image dimensions. Inpainters may only write inside their
//! mask; the panorama loop checks this after every call.

use std::sync::Arc;
use std::time::Duration;

use crate::error::Result;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::raster::{DepthMap, EquirectImage, PerspectiveImage, ViewMask};

pub mod analytic;
pub mod fill;
pub mod remote;
pub mod stub;

pub use analytic::{text_seed, AnalyticRoom, ColorField};
pub use remote::RemoteClient;
pub use stub::{StubDepth, StubInpainter, StubPanoInpainter, StubSuperResolver, StubViewSynthesizer, StubWarpRefiner, SynthesisMode};

/// Where a plugin runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Stub,
    Remote { endpoint: String, timeout: Duration },
}

pub trait Inpainter: Send + Sync {
    /// Fill the masked pixels of `image`; everything else must come back unchanged.
    fn inpaint(&self, image: &PerspectiveImage, mask: &ViewMask, instruction: &str) -> Result<PerspectiveImage>;
    fn backend(&self) -> Backend;
}

pub trait PanoInpainter: Send + Sync {
    fn inpaint_pano(&self, pano: &EquirectImage, mask: &ViewMask, instruction: &str) -> Result<EquirectImage>;
    fn backend(&self) -> Backend;
}

pub trait SuperResolver: Send + Sync {
    /// Integer upscale factor; the output is `factor` times larger per axis.
    fn factor(&self) -> u32;
    fn upscale(&self, image: &PerspectiveImage) -> Result<PerspectiveImage>;
    fn backend(&self) -> Backend;
}

pub trait DepthEstimator: Send + Sync {
    /// Ray distance from the panorama center for every valid pixel.
    fn estimate_pano_depth(&self, pano: &EquirectImage) -> Result<DepthMap>;
    fn backend(&self) -> Backend;
}

pub trait WarpRefiner: Send + Sync {
    /// Render `image` (with z-depth `depth`) from the camera `relative_pose`
    /// away, where `relative_pose` maps source camera coordinates to target
    /// camera coordinates. Returns the target view and its occlusion mask.
    fn warp_refine(&self, image: &PerspectiveImage, depth: &DepthMap, relative_pose: &Pose, k: &CameraIntrinsics) -> Result<(PerspectiveImage, ViewMask)>;
    fn backend(&self) -> Backend;
}

/// Frames along a trajectory, all posed in the world frame of the initial view.
#[derive(Debug, Clone)]
pub struct SynthesizedViews {
    pub frames: Vec<PerspectiveImage>,
    pub depths: Vec<DepthMap>,
    pub poses: Vec<Pose>,
}

pub trait ViewSynthesizer: Send + Sync {
    /// `trajectory` holds waypoints relative to the initial camera. Frame 0 is
    /// the initial view itself. `depth_hint` is the z-depth of `initial` when
    /// the caller has one.
    fn synthesize_views(&self, initial: &PerspectiveImage, trajectory: &[Pose], frame_count: usize, depth_hint: Option<&DepthMap>) -> Result<SynthesizedViews>;
    fn backend(&self) -> Backend;
}

#[derive(Clone)]
pub struct GeneratorSuite {
    pub inpainter: Arc<dyn Inpainter>,
    pub pano_inpainter: Arc<dyn PanoInpainter>,
    pub super_resolver: Arc<dyn SuperResolver>,
    pub depth_estimator: Arc<dyn DepthEstimator>,
    pub warp_refiner: Arc<dyn WarpRefiner>,
    pub view_synthesizer: Arc<dyn ViewSynthesizer>,
}

impl GeneratorSuite {
    /// All stubs. Panorama depth is a constant `pano_depth`.
    pub fn stub(pano_depth: f64) -> Self {
        GeneratorSuite {
            inpainter: Arc::new(StubInpainter),
            pano_inpainter: Arc::new(StubPanoInpainter),
            super_resolver: Arc::new(StubSuperResolver::default()),
            depth_estimator: Arc::new(StubDepth::Constant(pano_depth)),
            warp_refiner: Arc::new(StubWarpRefiner),
            view_synthesizer: Arc::new(StubViewSynthesizer::new(SynthesisMode::Warp)),
        }
    }

    /// Stubs whose depth and view synthesis come from an analytic room; the
    /// panorama is taken to be centered at the world origin.
    pub fn analytic(room: AnalyticRoom) -> Self {
        GeneratorSuite {
            depth_estimator: Arc::new(StubDepth::Analytic {
                room,
                eye: crate::geometry::Vec3::zeros(),
            }),
            view_synthesizer: Arc::new(StubViewSynthesizer::new(SynthesisMode::Analytic(room))),
            ..Self::stub(room.radius)
        }
    }

    /// Every plugin served by one remote endpoint.
    pub fn remote(base_url: &str, timeout: Duration, superres_factor: u32) -> Self {
        Self::from_remote(RemoteClient::new(base_url, timeout).with_superres_factor(superres_factor))
    }

    pub fn from_remote(client: RemoteClient) -> Self {
        let client = Arc::new(client);
        GeneratorSuite {
            inpainter: client.clone(),
            pano_inpainter: client.clone(),
            super_resolver: client.clone(),
            depth_estimator: client.clone(),
            warp_refiner: client.clone(),
            view_synthesizer: client,
        }
    }

    pub fn backends(&self) -> [Backend; 6] {
        [
            self.inpainter.backend(),
            self.pano_inpainter.backend(),
            self.super_resolver.backend(),
            self.depth_estimator.backend(),
            self.warp_refiner.backend(),
            self.view_synthesizer.backend(),
        ]
    }
}

impl std::fmt::Debug for GeneratorSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorSuite").field("backends", &self.backends()).finish()
    }
}
