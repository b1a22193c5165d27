//! Raster payloads: RGB images with per-pixel validity, depth maps and masks.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};

pub type Rgb = [f32; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveImage {
    pub pixels: Vec<Rgb>,
    pub valid: Vec<bool>,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl PerspectiveImage {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose, pixels: Vec<Rgb>, valid: Vec<bool>) -> Result<Self> {
        let n = intrinsics.width as usize * intrinsics.height as usize;
        if pixels.len() != n || valid.len() != n {
            return Err(Error::param(format!(
                "pixel buffers ({}, {}) do not match {}x{} intrinsics",
                pixels.len(),
                valid.len(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        Ok(PerspectiveImage {
            pixels,
            valid,
            intrinsics,
            pose,
        })
    }

    pub fn filled(intrinsics: CameraIntrinsics, pose: Pose, color: Rgb) -> Self {
        let n = intrinsics.width as usize * intrinsics.height as usize;
        PerspectiveImage {
            pixels: vec![color; n],
            valid: vec![true; n],
            intrinsics,
            pose,
        }
    }

    /// Evaluate `f(col, row)` at every pixel; the result is fully valid.
    pub fn from_fn(intrinsics: CameraIntrinsics, pose: Pose, f: impl Fn(usize, usize) -> Rgb) -> Self {
        let w = intrinsics.width as usize;
        let h = intrinsics.height as usize;
        let pixels = (0..w * h).map(|i| f(i % w, i / w)).collect();
        PerspectiveImage {
            pixels,
            valid: vec![true; w * h],
            intrinsics,
            pose,
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    pub fn same_shape(&self, other: &PerspectiveImage) -> bool {
        self.width() == other.width() && self.height() == other.height()
    }

    /// Bilinear sample at continuous pixel coordinates, edges clamped.
    pub fn sample(&self, u: f64, v: f64) -> Rgb {
        bilinear(&self.pixels, self.width(), self.height(), u - 0.5, v - 0.5, false)
    }

    /// True when every tap that `sample` would weight is valid.
    pub fn valid_at(&self, u: f64, v: f64) -> bool {
        taps_valid(&self.valid, self.width(), self.height(), u - 0.5, v - 0.5, false)
    }

    /// Mean absolute per-channel difference over pixels valid in both images.
    pub fn mean_abs_diff(&self, other: &PerspectiveImage) -> f64 {
        mean_abs_diff(&self.pixels, &self.valid, &other.pixels, &other.valid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
    pub valid: Vec<bool>,
}

impl EquirectImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>, valid: Vec<bool>) -> Result<Self> {
        check_equirect_size(width, height)?;
        if pixels.len() != width * height || valid.len() != width * height {
            return Err(Error::param("equirect buffers do not match width x height"));
        }
        Ok(EquirectImage {
            width,
            height,
            pixels,
            valid,
        })
    }

    pub fn blank(width: usize) -> Result<Self> {
        let height = width / 2;
        check_equirect_size(width, height)?;
        Ok(EquirectImage {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
        })
    }

    /// Bilinear sample at pixel-index coordinates (pixel centers on integers);
    /// u wraps around the seam and v clamps at the poles.
    pub fn sample(&self, u: f64, v: f64) -> Rgb {
        bilinear(&self.pixels, self.width, self.height, u, v, true)
    }

    pub fn valid_at(&self, u: f64, v: f64) -> bool {
        taps_valid(&self.valid, self.width, self.height, u, v, true)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

pub(crate) fn check_equirect_size(width: usize, height: usize) -> Result<()> {
    if height == 0 || width != 2 * height {
        return Err(Error::param(format!("equirect must be 2:1 and non-empty, got {width}x{height}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::param("depth buffers do not match width x height"));
        }
        let d = DepthMap {
            width,
            height,
            values,
            valid,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height], vec![true; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Option<f64>) -> Result<Self> {
        let (values, valid) = (0..width * height)
            .map(|i| match f(i % width, i / width) {
                Some(d) => (d, true),
                None => (0.0, false),
            })
            .unzip();
        Self::new(width, height, values, valid)
    }

    /// Valid depths must be positive and finite.
    pub fn validate(&self) -> Result<()> {
        for (d, &ok) in self.values.iter().zip(&self.valid) {
            if ok && !(d.is_finite() && *d > 0.0) {
                return Err(Error::param(format!("valid depth {d} is not positive and finite")));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, w: usize, h: usize) -> bool {
        self.width == w && self.height == h
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then_some(self.values[i])
    }

    /// Median of the valid depths.
    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .values
            .iter()
            .zip(&self.valid)
            .filter_map(|(d, &ok)| ok.then_some(*d))
            .collect();
        median_in_place(&mut v)
    }
}

pub(crate) fn median_in_place(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    /// Pixels a generator must fill.
    InpaintRegion,
    /// Pixels shared with another view.
    Overlap,
    /// Pixels hidden from the source view.
    Occlusion,
    /// Pixels inside the image bounds of another camera.
    Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub kind: MaskKind,
}

impl ViewMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>, kind: MaskKind) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::param("mask buffer does not match width x height"));
        }
        Ok(ViewMask {
            width,
            height,
            bits,
            kind,
        })
    }

    pub fn empty(width: usize, height: usize, kind: MaskKind) -> Self {
        ViewMask {
            width,
            height,
            bits: vec![false; width * height],
            kind,
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }
}

/// Bilinear interpolation at index coordinates (pixel centers on integers).
pub(crate) fn bilinear(pixels: &[Rgb], width: usize, height: usize, x: f64, y: f64, wrap_x: bool) -> Rgb {
    let (x0, x1, fx) = x_taps(x, width, wrap_x);
    let (y0, y1, fy) = axis_taps(y, height);
    let p00 = pixels[y0 * width + x0];
    let p10 = pixels[y0 * width + x1];
    let p01 = pixels[y1 * width + x0];
    let p11 = pixels[y1 * width + x1];
    std::array::from_fn(|c| {
        let top = p00[c] + (p10[c] - p00[c]) * fx;
        let bottom = p01[c] + (p11[c] - p01[c]) * fx;
        top + (bottom - top) * fy
    })
}

/// Clamped taps and weight along one axis.
#[inline]
fn x_taps(x: f64, width: usize, wrap_x: bool) -> (usize, usize, f32) {
    if wrap_x {
        let x0 = x.floor();
        let a = (x0 as isize).rem_euclid(width as isize) as usize;
        (a, (a + 1) % width, (x - x0) as f32)
    } else {
        axis_taps(x, width)
    }
}

fn taps_valid(valid: &[bool], width: usize, height: usize, x: f64, y: f64, wrap_x: bool) -> bool {
    let (x0, x1, fx) = x_taps(x, width, wrap_x);
    let (y0, y1, fy) = axis_taps(y, height);
    let xs: &[usize] = if fx > 0.0 { &[x0, x1] } else { &[x0] };
    let ys: &[usize] = if fy > 0.0 { &[y0, y1] } else { &[y0] };
    ys.iter().all(|&r| xs.iter().all(|&c| valid[r * width + c]))
}

fn axis_taps(x: f64, n: usize) -> (usize, usize, f32) {
    let max = (n - 1) as f64;
    let x = x.clamp(0.0, max);
    let x0 = x.floor();
    let i0 = x0 as usize;
    (i0, (i0 + 1).min(n - 1), (x - x0) as f32)
}

pub(crate) fn mean_abs_diff(a: &[Rgb], a_valid: &[bool], b: &[Rgb], b_valid: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        if a_valid[i] && b_valid[i] {
            for c in 0..3 {
                sum += (a[i][c] as f64 - b[i][c] as f64).abs();
            }
            n += 3;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Peak signal-to-noise ratio in dB over pixels valid in both images, for
/// values in `[0, 1]`. Infinite when the images agree exactly.
pub fn psnr(a: &PerspectiveImage, b: &PerspectiveImage) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::param("psnr of differently sized images"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.pixels.len() {
        if a.valid[i] && b.valid[i] {
            for c in 0..3 {
                let d = a.pixels[i][c] as f64 - b.pixels[i][c] as f64;
                sum += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("no pixel is valid in both images".into()));
    }
    Ok(-10.0 * (sum / n as f64).log10())
}

/// Average `factor x factor` blocks; validity requires every pixel in the block.
pub fn downsample_area(img: &PerspectiveImage, factor: u32) -> Result<PerspectiveImage> {
    let intrinsics = img.intrinsics.downscaled(factor)?;
    let f = factor as usize;
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    let src_w = img.width();
    let norm = 1.0 / (f * f) as f32;
    let mut pixels = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let mut acc = [0.0f32; 3];
            let mut ok = true;
            for dy in 0..f {
                for dx in 0..f {
                    let i = (row * f + dy) * src_w + col * f + dx;
                    for c in 0..3 {
                        acc[c] += img.pixels[i][c];
                    }
                    ok &= img.valid[i];
                }
            }
            pixels.push(acc.map(|a| a * norm));
            valid.push(ok);
        }
    }
    PerspectiveImage::new(intrinsics, img.pose, pixels, valid)
}

/// Bilinear upscale by an integer factor, keeping the field of view.
pub fn upsample_bilinear(img: &PerspectiveImage, factor: u32) -> PerspectiveImage {
    let intrinsics = img.intrinsics.scaled(factor);
    let s = factor as f64;
    PerspectiveImage::from_fn(intrinsics, img.pose, |col, row| {
        img.sample((col as f64 + 0.5) / s, (row as f64 + 0.5) / s)
    })
    .with_valid_from(img, factor)
}

impl PerspectiveImage {
    fn with_valid_from(mut self, src: &PerspectiveImage, factor: u32) -> Self {
        let f = factor as usize;
        let w = self.width();
        for (i, v) in self.valid.iter_mut().enumerate() {
            let (col, row) = (i % w / f, i / w / f);
            *v = src.valid[row * src.width() + col];
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(w: u32, h: u32) -> CameraIntrinsics {
        CameraIntrinsics::from_fov(60.0, w, h).unwrap()
    }

    #[test]
    fn bilinear_hits_pixel_centers_exactly() {
        let img = PerspectiveImage::from_fn(k(8, 6), Pose::identity(), |c, r| [c as f32, r as f32, 1.0]);
        assert_eq!(img.sample(3.5, 2.5), [3.0, 2.0, 1.0]);
        assert_eq!(img.sample(4.0, 2.5), [3.5, 2.0, 1.0]);
        assert_eq!(img.sample(-3.0, 100.0), [0.0, 5.0, 1.0]);
    }

    #[test]
    fn equirect_sampling_wraps_horizontally() {
        let mut pano = EquirectImage::blank(8).unwrap();
        for (i, p) in pano.pixels.iter_mut().enumerate() {
            *p = [(i % 8) as f32, 0.0, 0.0];
        }
        assert_eq!(pano.sample(7.5, 1.0)[0], 3.5);
        assert_eq!(pano.sample(-0.5, 1.0)[0], 3.5);
    }

    #[test]
    fn downsample_then_upsample_keeps_constants() {
        let img = PerspectiveImage::filled(k(16, 16), Pose::identity(), [0.25, 0.5, 0.75]);
        let up = upsample_bilinear(&img, 4);
        assert_eq!(up.width(), 64);
        assert!(up.pixels.iter().all(|p| *p == [0.25, 0.5, 0.75]));
        let down = downsample_area(&up, 4).unwrap();
        assert_eq!(down.intrinsics, img.intrinsics);
        assert!(down.pixels.iter().all(|p| *p == [0.25, 0.5, 0.75]));
        assert!(downsample_area(&img, 3).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median_in_place(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median_in_place(&mut []), None);
    }

    #[test]
    fn depth_rejects_non_positive() {
        assert!(DepthMap::new(1, 1, vec![0.0], vec![true]).is_err());
        assert!(DepthMap::new(1, 1, vec![0.0], vec![false]).is_ok());
        assert!(DepthMap::new(1, 1, vec![f64::NAN], vec![true]).is_err());
    }
}
