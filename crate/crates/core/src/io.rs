//! File formats: 8-bit PNG images and masks, PFM depth, binary PLY clouds and
//! the equirect JSON sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgba};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pointcloud::{PointCloud, SourceTag};
use crate::raster::{DepthMap, EquirectImage, MaskKind, Rgb, ViewMask};

pub fn quantize(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(x: u8) -> f32 {
    x as f32 / 255.0
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingArtifact(path.to_path_buf())
    } else {
        e.into()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| missing(path, e))
}

/// RGBA PNG with alpha 255 on valid pixels and 0 elsewhere.
pub fn write_rgb_png(path: &Path, width: usize, height: usize, pixels: &[Rgb], valid: &[bool]) -> Result<()> {
    let buf = encode_rgb_png(width, height, pixels, valid)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn encode_rgb_png(width: usize, height: usize, pixels: &[Rgb], valid: &[bool]) -> Result<Vec<u8>> {
    let img: ImageBuffer<Rgba<u8>, Vec<u8>> = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        let i = y as usize * width + x as usize;
        let p = pixels[i];
        Rgba([quantize(p[0]), quantize(p[1]), quantize(p[2]), if valid[i] { 255 } else { 0 }])
    });
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

/// Pixels, validity (alpha > 127, or all valid without alpha), width, height.
pub fn read_rgb_png(path: &Path) -> Result<(Vec<Rgb>, Vec<bool>, usize, usize)> {
    let bytes = std::fs::read(path).map_err(|e| missing(path, e))?;
    decode_rgb_png(&bytes)
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<(Vec<Rgb>, Vec<bool>, usize, usize)> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let has_alpha = img.color().has_alpha();
    let rgba = img.to_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let mut pixels = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for p in rgba.pixels() {
        pixels.push([dequantize(p[0]), dequantize(p[1]), dequantize(p[2])]);
        valid.push(!has_alpha || p[3] > 127);
    }
    Ok((pixels, valid, w, h))
}

pub fn encode_mask_png(mask: &ViewMask) -> Result<Vec<u8>> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

pub fn write_mask_png(path: &Path, mask: &ViewMask) -> Result<()> {
    std::fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

pub fn decode_mask_png(bytes: &[u8], kind: MaskKind) -> Result<ViewMask> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    ViewMask::new(w, h, img.pixels().map(|p| p[0] > 127).collect(), kind)
}

pub fn read_mask_png(path: &Path, kind: MaskKind) -> Result<ViewMask> {
    let bytes = std::fs::read(path).map_err(|e| missing(path, e))?;
    decode_mask_png(&bytes, kind)
}

// ---------------------------------------------------------------------------
// PFM

/// Encode float rows (top row first in memory) as little-endian PFM.
pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f32]) -> Result<Vec<u8>> {
    let tag = match channels {
        1 => "Pf",
        3 => "PF",
        _ => return Err(Error::param("PFM supports 1 or 3 channels")),
    };
    if data.len() != width * height * channels {
        return Err(Error::param("PFM buffer does not match dimensions"));
    }
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    let row_len = width * channels;
    for row in (0..height).rev() {
        for v in &data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode a PFM into (width, height, channels, top-row-first data).
pub fn decode_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<f32>), String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PFM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?.to_string());
    }
    pos += 1; // single whitespace byte after the scale
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("bad PFM magic {other:?}")),
    };
    let width: usize = fields[1].parse().map_err(|_| "bad PFM width")?;
    let height: usize = fields[2].parse().map_err(|_| "bad PFM height")?;
    let scale: f32 = fields[3].parse().map_err(|_| "bad PFM scale")?;
    let little = scale < 0.0;
    let n = width * height * channels;
    let body = bytes.get(pos..pos + 4 * n).ok_or("truncated PFM body")?;
    let row_len = width * channels;
    let mut data = vec![0.0f32; n];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let file_row = k / row_len;
        let row = height - 1 - file_row;
        data[row * row_len + k % row_len] = v;
    }
    Ok((width, height, channels, data))
}

/// Depth as single-channel PFM; invalid pixels are stored as 0.
pub fn encode_depth_pfm(depth: &DepthMap) -> Result<Vec<u8>> {
    let data: Vec<f32> = depth
        .values
        .iter()
        .zip(&depth.valid)
        .map(|(d, &ok)| if ok { *d as f32 } else { 0.0 })
        .collect();
    encode_pfm(depth.width, depth.height, 1, &data)
}

pub fn decode_depth_pfm(bytes: &[u8]) -> std::result::Result<DepthMap, String> {
    let (w, h, c, data) = decode_pfm(bytes)?;
    if c != 1 {
        return Err("depth PFM must have one channel".into());
    }
    DepthMap::from_fn(w, h, |col, row| {
        let v = data[row * w + col] as f64;
        (v > 0.0 && v.is_finite()).then_some(v)
    })
    .map_err(|e| e.to_string())
}

pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    std::fs::write(path, encode_depth_pfm(depth)?)?;
    Ok(())
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| missing(path, e))?;
    decode_depth_pfm(&bytes).map_err(|reason| Error::format(path, reason))
}

// ---------------------------------------------------------------------------
// Equirect PNG + sidecar

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquirectSidecar {
    pub projection: String,
    pub width: usize,
    pub height: usize,
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn write_equirect(path: &Path, pano: &EquirectImage) -> Result<()> {
    write_rgb_png(path, pano.width, pano.height, &pano.pixels, &pano.valid)?;
    let sidecar = EquirectSidecar {
        projection: "equirectangular".into(),
        width: pano.width,
        height: pano.height,
    };
    crate::json::write_file(&sidecar_path(path), &sidecar)
}

pub fn read_equirect(path: &Path) -> Result<EquirectImage> {
    let sidecar: EquirectSidecar = crate::json::read_file(&sidecar_path(path))?;
    if sidecar.projection != "equirectangular" {
        return Err(Error::format(path, format!("unsupported projection {:?}", sidecar.projection)));
    }
    let (pixels, valid, w, h) = read_rgb_png(path)?;
    if (w, h) != (sidecar.width, sidecar.height) {
        return Err(Error::format(path, "image size disagrees with sidecar"));
    }
    EquirectImage::new(w, h, pixels, valid)
}

// ---------------------------------------------------------------------------
// PLY

/// Binary little-endian PLY with float32 positions and uint8 colors.
///
/// A cloud from one source carries `comment source=<tag>`; a fused cloud
/// carries one `comment source=<tag> count=<n>` per contiguous run of points.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply_to(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    let runs = cloud.tag_runs();
    if runs.len() == 1 {
        writeln!(w, "comment source={}", runs[0].0)?;
    } else {
        for (tag, n) in &runs {
            writeln!(w, "comment source={tag} count={n}")?;
        }
    }
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "end_header")?;
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        for v in [p.x, p.y, p.z] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.write_all(&[quantize(c[0]), quantize(c[1]), quantize(c[2])])?;
    }
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let mut r = BufReader::new(open(path)?);
    let bad = |reason: &str| Error::format(path, reason);

    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut count: Option<usize> = None;
    let mut runs: Vec<(SourceTag, Option<usize>)> = Vec::new();
    let mut properties = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("unterminated header"));
        }
        let l = line.trim_end();
        if l == "end_header" {
            break;
        } else if let Some(fmt) = l.strip_prefix("format ") {
            if fmt != "binary_little_endian 1.0" {
                return Err(bad("only binary_little_endian 1.0 is supported"));
            }
        } else if let Some(rest) = l.strip_prefix("comment source=") {
            let mut parts = rest.split_whitespace();
            let tag: SourceTag = parts.next().unwrap_or("").parse().map_err(|_| bad("bad source tag"))?;
            let n = match parts.next() {
                Some(c) => Some(
                    c.strip_prefix("count=")
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| bad("bad source count"))?,
                ),
                None => None,
            };
            runs.push((tag, n));
        } else if let Some(n) = l.strip_prefix("element vertex ") {
            count = Some(n.parse().map_err(|_| bad("bad vertex count"))?);
        } else if l.starts_with("element ") {
            return Err(bad("only vertex elements are supported"));
        } else if let Some(p) = l.strip_prefix("property ") {
            properties.push(p.to_string());
        }
    }
    let expected = [
        "float x",
        "float y",
        "float z",
        "uchar red",
        "uchar green",
        "uchar blue",
    ];
    if properties != expected {
        return Err(bad("unexpected vertex properties"));
    }
    let n = count.ok_or_else(|| bad("no vertex element"))?;

    let mut body = vec![0u8; n * 15];
    r.read_exact(&mut body).map_err(|_| bad("truncated vertex data"))?;
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for rec in body.chunks_exact(15) {
        let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]) as f64;
        positions.push(Vec3::new(f(0), f(4), f(8)));
        colors.push([dequantize(rec[12]), dequantize(rec[13]), dequantize(rec[14])]);
    }

    let tags = match runs.as_slice() {
        [] => vec![SourceTag::Panorama; n],
        [(tag, None)] => vec![*tag; n],
        _ => {
            let mut tags = Vec::with_capacity(n);
            for (tag, c) in &runs {
                let c = c.ok_or_else(|| bad("multiple source comments need counts"))?;
                tags.extend(std::iter::repeat(*tag).take(c));
            }
            if tags.len() != n {
                return Err(bad("source counts do not add up to the vertex count"));
            }
            tags
        }
    };
    PointCloud::from_parts(positions, colors, tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pfm_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let data: Vec<f32> = (0..w * h).map(|i| ((i as u64 ^ seed) % 1000) as f32 * 0.37).collect();
            let bytes = encode_pfm(w, h, 1, &data).unwrap();
            let (w2, h2, c, back) = decode_pfm(&bytes).unwrap();
            prop_assert_eq!((w2, h2, c), (w, h, 1));
            prop_assert_eq!(back, data);
        }
    }

    #[test]
    fn pfm_rows_are_stored_bottom_up() {
        let bytes = encode_pfm(1, 2, 1, &[1.0, 2.0]).unwrap();
        let body = &bytes[bytes.len() - 8..];
        assert_eq!(&body[..4], &2.0f32.to_le_bytes());
        assert!(bytes.starts_with(b"Pf\n1 2\n-1.0\n"));
    }

    #[test]
    fn big_endian_pfm_is_accepted() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let (_, _, _, data) = decode_pfm(&bytes).unwrap();
        assert_eq!(data, vec![1.5, -2.0]);
    }

    #[test]
    fn ply_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let a = PointCloud::from_parts(
            vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 8.0)],
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 128.0 / 255.0]],
            vec![SourceTag::Moving(2); 2],
        )
        .unwrap();
        write_ply(&path, &a).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("comment source=moving(2)\n"));
        assert!(text.contains("format binary_little_endian 1.0\n"));
        assert_eq!(read_ply(&path).unwrap(), a);

        let b = PointCloud::from_parts(vec![Vec3::zeros()], vec![[0.0; 3]], vec![SourceTag::Panorama]).unwrap();
        let fused = crate::pointcloud::fuse(&b, &[a]);
        write_ply(&path, &fused).unwrap();
        assert_eq!(read_ply(&path).unwrap(), fused);
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        let err = read_ply(Path::new("/nonexistent/x.ply")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
