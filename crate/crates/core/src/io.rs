//! On-disk interchange: PNG rasters with JSON sidecars, feature files, view
//! bundles and content hashes.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::lift::{dequantize_height, quantize_height, HeightMap};
use crate::metrics::FeatureSet;
use crate::render::CameraView;
use image::{ImageBuffer, Luma, Rgb, Rgba};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

fn to8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(path: &Path, raster: &RasterGrid, sixteen: bool) -> Result<Vec<u8>> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let mut out = std::io::Cursor::new(Vec::new());
    let fmt = image::ImageFormat::Png;
    match (raster.channels(), sixteen) {
        (1, false) => {
            let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(w, h, raster.data().iter().map(|v| to8(*v)).collect::<Vec<_>>()).unwrap();
            buf.write_to(&mut out, fmt)?;
        }
        (1, true) => {
            let d: Vec<u16> = raster.data().iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
            let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(w, h, d).unwrap();
            buf.write_to(&mut out, fmt)?;
        }
        (3, false) => {
            let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(w, h, raster.data().iter().map(|v| to8(*v)).collect::<Vec<_>>()).unwrap();
            buf.write_to(&mut out, fmt)?;
        }
        (4, false) => {
            let buf: ImageBuffer<Rgba<u8>, _> = ImageBuffer::from_raw(w, h, raster.data().iter().map(|v| to8(*v)).collect::<Vec<_>>()).unwrap();
            buf.write_to(&mut out, fmt)?;
        }
        (c, s) => {
            return Err(Error::Contract(format!("cannot write {c}-channel {} PNG {}", if s { "16-bit" } else { "8-bit" }, path.display())))
        }
    }
    Ok(out.into_inner())
}

/// 8-bit PNG of values in `[0, 1]` (1, 3 or 4 channels).
pub fn write_png8(path: &Path, raster: &RasterGrid) -> Result<()> {
    write_bytes(path, &encode_png(path, raster, false)?)
}

/// 16-bit grayscale PNG of values in `[0, 1]`.
pub fn write_png16(path: &Path, raster: &RasterGrid) -> Result<()> {
    write_bytes(path, &encode_png(path, raster, true)?)
}

/// Reads a PNG into `[0, 1]` values with unit gsd and zero anchor.
pub fn read_png(path: &Path) -> Result<RasterGrid> {
    let img = image::load_from_memory_with_format(&read_bytes(path)?, image::ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    use image::DynamicImage as D;
    let (c, data): (usize, Vec<f64>) = match img {
        D::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        D::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        D::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        D::ImageRgba8(b) => (4, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        other => (3, other.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
    };
    RasterGrid::image(w, h, c, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub gsd: f64,
    pub anchor_x: f64,
    pub anchor_y: f64,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_offset: Option<f64>,
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Georeferenced 8-bit raster: PNG plus JSON sidecar.
pub fn write_raster(path: &Path, raster: &RasterGrid) -> Result<()> {
    write_png8(path, raster)?;
    let sc = RasterSidecar {
        gsd: raster.gsd(),
        anchor_x: raster.anchor()[0],
        anchor_y: raster.anchor()[1],
        channels: raster.channels(),
        height_scale: None,
        height_offset: None,
    };
    write_json(&sidecar_path(path), &sc)
}

pub fn read_raster(path: &Path) -> Result<RasterGrid> {
    let sc: RasterSidecar = read_json(&sidecar_path(path))?;
    let r = read_png(path)?;
    if r.channels() != sc.channels {
        return Err(Error::Contract(format!("{} has {} channels, sidecar says {}", path.display(), r.channels(), sc.channels)));
    }
    r.with_gsd_anchor(sc.gsd, [sc.anchor_x, sc.anchor_y])
}

/// Height map as an 8-bit PNG normalized over its valid range.
pub fn write_height(path: &Path, h: &HeightMap) -> Result<()> {
    let q = quantize_height(&h.raster, h.valid_range)?;
    let r = &h.raster;
    let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(r.width() as u32, r.height() as u32, q).unwrap();
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    write_bytes(path, &out.into_inner())?;
    let sc = RasterSidecar {
        gsd: r.gsd(),
        anchor_x: r.anchor()[0],
        anchor_y: r.anchor()[1],
        channels: 1,
        height_scale: Some(h.valid_range.1 - h.valid_range.0),
        height_offset: Some(h.valid_range.0),
    };
    write_json(&sidecar_path(path), &sc)
}

pub fn read_height(path: &Path) -> Result<HeightMap> {
    let sc: RasterSidecar = read_json(&sidecar_path(path))?;
    let img = image::load_from_memory_with_format(&read_bytes(path)?, image::ImageFormat::Png)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let like = RasterGrid::from_data(w, h, 1, sc.gsd, [sc.anchor_x, sc.anchor_y], vec![0.0; w * h])?;
    let lo = sc.height_offset.unwrap_or(0.0);
    let range = (lo, lo + sc.height_scale.ok_or_else(|| Error::Contract("height sidecar lacks height_scale".into()))?);
    let raster = dequantize_height(img.as_raw(), range, &like)?;
    Ok(HeightMap { raster, valid_range: range })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureHeader {
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
}

/// Feature rows as little-endian f32 (`path`) plus `{n, D}` JSON header.
pub fn write_features(path: &Path, set: &FeatureSet) -> Result<()> {
    let bytes: Vec<u8> = set.rows.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    write_bytes(path, &bytes)?;
    write_json(&path.with_extension("json"), &FeatureHeader { n: set.n, d: set.d })
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let hdr: FeatureHeader = read_json(&path.with_extension("json"))?;
    let bytes = read_bytes(path)?;
    if bytes.len() != hdr.n * hdr.d * 4 {
        return Err(Error::Contract(format!("{} holds {} bytes, header wants {}x{} f32", path.display(), bytes.len(), hdr.n, hdr.d)));
    }
    let rows = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
    FeatureSet::new(hdr.n, hdr.d, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CameraRecord {
    pub index: usize,
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl CameraRecord {
    pub fn from_camera(c: &Camera) -> Self {
        let k = c.k;
        CameraRecord {
            index: c.index,
            k: [[k.fx, 0.0, k.cx], [0.0, k.fy, k.cy], [0.0, 0.0, 1.0]],
            r: c.r,
            t: c.t,
            width: k.width,
            height: k.height,
        }
    }

    pub fn to_camera(&self) -> Camera {
        let k = crate::camera::Intrinsics {
            fx: self.k[0][0],
            fy: self.k[1][1],
            cx: self.k[0][2],
            cy: self.k[1][2],
            width: self.width,
            height: self.height,
        };
        Camera { index: self.index, k, r: self.r, t: self.t }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CamerasFile {
    /// Depth PNGs store `depth / depth_max`; empty pixels are 1.
    pub depth_max: f64,
    pub cameras: Vec<CameraRecord>,
}

pub fn view_file(dir: &Path, i: usize, kind: &str) -> PathBuf {
    dir.join(format!("view_{i:02}_{kind}.png"))
}

/// Writes per-view rgb, mask and 16-bit depth PNGs plus `cameras.json`.
/// `images` overrides the views' own colors when given. Returns written paths.
pub fn write_view_bundle(dir: &Path, views: &[CameraView], images: Option<&[RasterGrid]>) -> Result<Vec<PathBuf>> {
    let depth_max = views
        .iter()
        .flat_map(|v| v.depth.data().iter().copied().filter(|d| d.is_finite()))
        .fold(1.0f64, f64::max)
        .ceil();
    let mut written = Vec::new();
    for (i, v) in views.iter().enumerate() {
        let rgb = images.map_or(&v.rgb, |im| &im[i]);
        let p = view_file(dir, i, "rgb");
        write_png8(&p, rgb)?;
        written.push(p);
        let p = view_file(dir, i, "mask");
        write_png8(&p, &v.lateral_mask)?;
        written.push(p);
        let p = view_file(dir, i, "depth");
        write_png16(&p, &v.depth.map(|d| if d.is_finite() { d / depth_max } else { 1.0 }))?;
        written.push(p);
    }
    let p = dir.join("cameras.json");
    write_json(&p, &CamerasFile { depth_max, cameras: views.iter().map(|v| CameraRecord::from_camera(&v.camera)).collect() })?;
    written.push(p);
    Ok(written)
}

pub fn read_cameras(dir: &Path) -> Result<Vec<Camera>> {
    let f: CamerasFile = read_json(&dir.join("cameras.json"))?;
    Ok(f.cameras.iter().map(CameraRecord::to_camera).collect())
}

pub fn read_view_images(dir: &Path, n: usize) -> Result<Vec<RasterGrid>> {
    (0..n).map(|i| read_png(&view_file(dir, i, "rgb"))).collect()
}
