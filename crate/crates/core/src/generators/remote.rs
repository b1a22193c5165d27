//! HTTP client for model servers.
//!
//! Each call is a `POST {base}/v1/{route}` with a JSON body carrying images as
//! base64 PNG and depth as base64 PFM. Calls to one route are serialized.

use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Backend, DepthEstimator, Inpainter, PanoInpainter, SuperResolver, SynthesizedViews, ViewSynthesizer, WarpRefiner};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, IntrinsicsRecord, Pose, PoseRecord};
use crate::io::{decode_depth_pfm, decode_mask_png, decode_rgb_png, encode_depth_pfm, encode_mask_png, encode_rgb_png, quantize};
use crate::raster::{DepthMap, EquirectImage, MaskKind, PerspectiveImage, Rgb, ViewMask};

/// Environment variable holding the default endpoint base URL.
pub const ENDPOINT_ENV: &str = "PANOSCENE_ENDPOINT";

const RESPONSE_LIMIT: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Inpaint,
    SuperRes,
    Warp,
    Views,
    PanoDepth,
}

impl Route {
    pub fn path(self) -> &'static str {
        match self {
            Route::Inpaint => "inpaint",
            Route::SuperRes => "superres",
            Route::Warp => "warp",
            Route::Views => "views",
            Route::PanoDepth => "panodepth",
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RemoteRequest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_png_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_png_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_pfm_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<IntrinsicsRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RemoteFrame {
    pub image_png_b64: String,
    pub depth_pfm_b64: String,
    pub pose: PoseRecord,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RemoteResponse {
    #[serde(default)]
    pub image_png_b64: Option<String>,
    #[serde(default)]
    pub mask_png_b64: Option<String>,
    #[serde(default)]
    pub depth_pfm_b64: Option<String>,
    #[serde(default)]
    pub frames: Vec<RemoteFrame>,
}

pub struct RemoteClient {
    base: String,
    timeout: Duration,
    superres_factor: u32,
    seed: Option<u64>,
    agent: ureq::Agent,
    locks: [Mutex<()>; 5],
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient").field("base", &self.base).field("timeout", &self.timeout).finish()
    }
}

fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

fn b64_decode(field: &str, text: &str) -> Result<Vec<u8>> {
    B64.decode(text).map_err(|e| contract(format!("{field}: bad base64: {e}")))
}

fn decode_image(field: &str, text: Option<&String>) -> Result<(Vec<Rgb>, Vec<bool>, usize, usize)> {
    let text = text.ok_or_else(|| contract(format!("response lacks {field}")))?;
    decode_rgb_png(&b64_decode(field, text)?).map_err(|e| contract(format!("{field}: {e}")))
}

fn decode_depth(text: Option<&String>) -> Result<DepthMap> {
    let text = text.ok_or_else(|| contract("response lacks depth_pfm_b64"))?;
    decode_depth_pfm(&b64_decode("depth_pfm_b64", text)?).map_err(|e| contract(format!("depth_pfm_b64: {e}")))
}

fn expect_dims(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(contract(format!(
            "{what} is {}x{}, expected {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

/// Keep the exact input outside `mask`, after checking the server left it
/// alone at 8-bit precision.
fn restore_outside_mask(before: (&[Rgb], &[bool]), after: (&mut [Rgb], &mut [bool]), mask: &[bool]) -> Result<()> {
    for i in 0..mask.len() {
        if mask[i] {
            continue;
        }
        let unchanged = before.1[i] == after.1[i] && (!before.1[i] || before.0[i].map(quantize) == after.0[i].map(quantize));
        if !unchanged {
            return Err(contract(format!("server changed pixel {i} outside the mask")));
        }
        after.0[i] = before.0[i];
        after.1[i] = before.1[i];
    }
    Ok(())
}

impl RemoteClient {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        RemoteClient {
            base: base_url.trim_end_matches('/').to_string(),
            timeout,
            superres_factor: 4,
            seed: None,
            agent,
            locks: Default::default(),
        }
    }

    pub fn with_superres_factor(mut self, factor: u32) -> Self {
        self.superres_factor = factor;
        self
    }

    /// Sent as `params.seed` with every request.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Client for the URL in [`ENDPOINT_ENV`], if set.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().map(|url| Self::new(&url, timeout))
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn backend_tag(&self) -> Backend {
        Backend::Remote {
            endpoint: self.base.clone(),
            timeout: self.timeout,
        }
    }

    /// One request, retried once when the server could not be reached or
    /// answered 5xx.
    pub fn call(&self, route: Route, request: &RemoteRequest) -> Result<RemoteResponse> {
        let body = match self.seed {
            Some(seed) if !request.params.contains_key("seed") => {
                let mut value = serde_json::to_value(request)?;
                value["params"]["seed"] = seed.into();
                serde_json::to_vec(&value)?
            }
            _ => serde_json::to_vec(request)?,
        };
        let url = format!("{}/v1/{}", self.base, route.path());
        let _guard = self.locks[route as usize].lock().unwrap_or_else(|e| e.into_inner());
        match self.post(&url, &body) {
            Err((true, e)) => {
                log::warn!("{url}: {e}; retrying once");
                self.post(&url, &body).map_err(|(_, e)| e)
            }
            other => other.map_err(|(_, e)| e),
        }
    }

    /// Err carries whether the failure is worth a retry.
    fn post(&self, url: &str, body: &[u8]) -> std::result::Result<RemoteResponse, (bool, Error)> {
        let mut resp = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| (true, Error::Transport(format!("{url}: {e}"))))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(RESPONSE_LIMIT)
            .read_to_string()
            .map_err(|e| (true, Error::Transport(format!("{url}: reading response: {e}"))))?;
        if status != 200 {
            return Err((status >= 500, Error::Transport(format!("{url}: HTTP {status}: {text}"))));
        }
        serde_json::from_str(&text).map_err(|e| (false, contract(format!("{url}: malformed response: {e}"))))
    }
}

impl Inpainter for RemoteClient {
    fn inpaint(&self, image: &PerspectiveImage, mask: &ViewMask, instruction: &str) -> Result<PerspectiveImage> {
        let dims = (image.width(), image.height());
        expect_dims("mask", (mask.width, mask.height), dims)?;
        let request = RemoteRequest {
            image_png_b64: Some(B64.encode(encode_rgb_png(dims.0, dims.1, &image.pixels, &image.valid)?)),
            mask_png_b64: Some(B64.encode(encode_mask_png(mask)?)),
            pose: Some((&image.pose).into()),
            intrinsics: Some((&image.intrinsics).into()),
            instruction: Some(instruction.to_string()),
            ..Default::default()
        };
        let resp = self.call(Route::Inpaint, &request)?;
        let (mut pixels, mut valid, w, h) = decode_image("image_png_b64", resp.image_png_b64.as_ref())?;
        expect_dims("inpainted image", (w, h), dims)?;
        restore_outside_mask((&image.pixels, &image.valid), (&mut pixels, &mut valid), &mask.bits)?;
        PerspectiveImage::new(image.intrinsics, image.pose, pixels, valid)
    }

    fn backend(&self) -> Backend {
        self.backend_tag()
    }
}

impl PanoInpainter for RemoteClient {
    fn inpaint_pano(&self, pano: &EquirectImage, mask: &ViewMask, instruction: &str) -> Result<EquirectImage> {
        let dims = (pano.width, pano.height);
        expect_dims("mask", (mask.width, mask.height), dims)?;
        let mut params = serde_json::Map::new();
        params.insert("projection".into(), "equirectangular".into());
        let request = RemoteRequest {
            image_png_b64: Some(B64.encode(encode_rgb_png(dims.0, dims.1, &pano.pixels, &pano.valid)?)),
            mask_png_b64: Some(B64.encode(encode_mask_png(mask)?)),
            instruction: Some(instruction.to_string()),
            params,
            ..Default::default()
        };
        let resp = self.call(Route::Inpaint, &request)?;
        let (mut pixels, mut valid, w, h) = decode_image("image_png_b64", resp.image_png_b64.as_ref())?;
        expect_dims("inpainted panorama", (w, h), dims)?;
        restore_outside_mask((&pano.pixels, &pano.valid), (&mut pixels, &mut valid), &mask.bits)?;
        EquirectImage::new(w, h, pixels, valid)
    }

    fn backend(&self) -> Backend {
        self.backend_tag()
    }
}

impl SuperResolver for RemoteClient {
    fn factor(&self) -> u32 {
        self.superres_factor
    }

    fn upscale(&self, image: &PerspectiveImage) -> Result<PerspectiveImage> {
        let mut params = serde_json::Map::new();
        params.insert("factor".into(), self.superres_factor.into());
        let request = RemoteRequest {
            image_png_b64: Some(B64.encode(encode_rgb_png(image.width(), image.height(), &image.pixels, &image.valid)?)),
            params,
            ..Default::default()
        };
        let resp = self.call(Route::SuperRes, &request)?;
        let (pixels, valid, w, h) = decode_image("image_png_b64", resp.image_png_b64.as_ref())?;
        let f = self.superres_factor as usize;
        expect_dims("upscaled image", (w, h), (image.width() * f, image.height() * f))?;
        PerspectiveImage::new(image.intrinsics.scaled(self.superres_factor), image.pose, pixels, valid)
    }

    fn backend(&self) -> Backend {
        self.backend_tag()
    }
}

impl DepthEstimator for RemoteClient {
    fn estimate_pano_depth(&self, pano: &EquirectImage) -> Result<DepthMap> {
        let request = RemoteRequest {
            image_png_b64: Some(B64.encode(encode_rgb_png(pano.width, pano.height, &pano.pixels, &pano.valid)?)),
            ..Default::default()
        };
        let resp = self.call(Route::PanoDepth, &request)?;
        let depth = decode_depth(resp.depth_pfm_b64.as_ref())?;
        expect_dims("panorama depth", (depth.width, depth.height), (pano.width, pano.height))?;
        Ok(depth)
    }

    fn backend(&self) -> Backend {
        self.backend_tag()
    }
}

impl WarpRefiner for RemoteClient {
    fn warp_refine(&self, image: &PerspectiveImage, depth: &DepthMap, relative_pose: &Pose, k: &CameraIntrinsics) -> Result<(PerspectiveImage, ViewMask)> {
        let request = RemoteRequest {
            image_png_b64: Some(B64.encode(encode_rgb_png(image.width(), image.height(), &image.pixels, &image.valid)?)),
            depth_pfm_b64: Some(B64.encode(encode_depth_pfm(depth)?)),
            pose: Some(relative_pose.into()),
            intrinsics: Some(k.into()),
            ..Default::default()
        };
        let resp = self.call(Route::Warp, &request)?;
        let dims = (k.width as usize, k.height as usize);
        let (pixels, valid, w, h) = decode_image("image_png_b64", resp.image_png_b64.as_ref())?;
        expect_dims("warped image", (w, h), dims)?;
        let mask_text = resp.mask_png_b64.as_ref().ok_or_else(|| contract("response lacks mask_png_b64"))?;
        let mask = decode_mask_png(&b64_decode("mask_png_b64", mask_text)?, MaskKind::Occlusion).map_err(|e| contract(format!("mask_png_b64: {e}")))?;
        expect_dims("occlusion mask", (mask.width, mask.height), dims)?;
        let pose = crate::geometry::compose(relative_pose, &image.pose);
        Ok((PerspectiveImage::new(*k, pose, pixels, valid)?, mask))
    }

    fn backend(&self) -> Backend {
        self.backend_tag()
    }
}

impl ViewSynthesizer for RemoteClient {
    fn synthesize_views(&self, initial: &PerspectiveImage, trajectory: &[Pose], frame_count: usize, depth_hint: Option<&DepthMap>) -> Result<SynthesizedViews> {
        if trajectory.is_empty() || frame_count == 0 {
            return Err(Error::param("trajectory and frame count must be non-empty"));
        }
        let mut params = serde_json::Map::new();
        params.insert("frame_count".into(), frame_count.into());
        params.insert(
            "trajectory".into(),
            serde_json::to_value(trajectory.iter().map(PoseRecord::from).collect::<Vec<_>>())?,
        );
        let request = RemoteRequest {
            image_png_b64: Some(B64.encode(encode_rgb_png(initial.width(), initial.height(), &initial.pixels, &initial.valid)?)),
            depth_pfm_b64: depth_hint.map(encode_depth_pfm).transpose()?.map(|b| B64.encode(b)),
            pose: Some((&initial.pose).into()),
            intrinsics: Some((&initial.intrinsics).into()),
            params,
            ..Default::default()
        };
        let resp = self.call(Route::Views, &request)?;
        if resp.frames.len() != frame_count {
            return Err(contract(format!("expected {frame_count} frames, got {}", resp.frames.len())));
        }
        let dims = (initial.width(), initial.height());
        let mut out = SynthesizedViews {
            frames: Vec::with_capacity(frame_count),
            depths: Vec::with_capacity(frame_count),
            poses: Vec::with_capacity(frame_count),
        };
        for (f, frame) in resp.frames.iter().enumerate() {
            let pose = if f == 0 { initial.pose } else { Pose::try_from(&frame.pose).map_err(|e| contract(format!("frame {f}: {e}")))? };
            let (pixels, valid, w, h) = decode_image("frames.image_png_b64", Some(&frame.image_png_b64))?;
            expect_dims("frame", (w, h), dims)?;
            let depth = decode_depth(Some(&frame.depth_pfm_b64))?;
            expect_dims("frame depth", (depth.width, depth.height), dims)?;
            out.frames.push(if f == 0 { initial.clone() } else { PerspectiveImage::new(initial.intrinsics, pose, pixels, valid)? });
            out.depths.push(depth);
            out.poses.push(pose);
        }
        Ok(out)
    }

    fn backend(&self) -> Backend {
        self.backend_tag()
    }
}
