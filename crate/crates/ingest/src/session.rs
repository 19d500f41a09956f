//! Session-log directories: a `manifest.json` plus per-frame PNG files.
//!
//! RGB is 8-bit PNG. Depth is 16-bit single-channel PNG where
//! `value × depth_scale_m_per_unit` is camera-frame z in meters and 0 is
//! invalid.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use rfnode_core::{DepthImage, FrameSample, PinholeCamera, Pose, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::registry::SensorRegistry;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub distortion: [f64; 4],
    pub rectified: bool,
    pub has_depth: bool,
}

impl CameraRecord {
    pub fn from_camera(id: impl Into<String>, camera: &PinholeCamera, has_depth: bool) -> Self {
        Self {
            id: id.into(),
            fx: camera.fx(),
            fy: camera.fy(),
            cx: camera.cx(),
            cy: camera.cy(),
            width: camera.width(),
            height: camera.height(),
            distortion: camera.distortion(),
            rectified: camera.rectified(),
            has_depth,
        }
    }

    pub fn camera(&self) -> Result<PinholeCamera, IngestError> {
        Ok(PinholeCamera::with_distortion(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            self.distortion,
            self.rectified,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let [qw, qx, qy, qz, tx, ty, tz] = p.to_array();
        Self { qw, qx, qy, qz, tx, ty, tz }
    }
}

impl PoseRecord {
    pub fn pose(&self) -> Result<Pose, IngestError> {
        Ok(Pose::from_array([self.qw, self.qx, self.qy, self.qz, self.tx, self.ty, self.tz])?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub cam: String,
    pub seq: u64,
    pub t: f64,
    pub pose: PoseRecord,
    pub rgb: String,
    pub depth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cameras: Vec<CameraRecord>,
    pub frames: Vec<FrameRecord>,
    pub depth_scale_m_per_unit: f64,
}

impl Manifest {
    /// Parses and checks structural consistency (unique camera ids, known
    /// cameras, nondecreasing per-camera seq, unique `(cam, seq)`, valid
    /// intrinsics, depth paths only for depth cameras).
    pub fn parse(json: &str) -> Result<Self, IngestError> {
        let m: Manifest = serde_json::from_str(json)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |s: String| Err(IngestError::Manifest(s));
        if !(self.depth_scale_m_per_unit.is_finite() && self.depth_scale_m_per_unit > 0.0) {
            return bad("depth_scale_m_per_unit must be positive".into());
        }
        let mut cams = HashMap::new();
        for c in &self.cameras {
            c.camera()?;
            if cams.insert(c.id.as_str(), c).is_some() {
                return bad(format!("duplicate camera id `{}`", c.id));
            }
        }
        let mut last_seq: HashMap<&str, u64> = HashMap::new();
        let mut pairs = HashSet::new();
        for f in &self.frames {
            let Some(cam) = cams.get(f.cam.as_str()) else {
                return bad(format!("frame references unknown camera `{}`", f.cam));
            };
            if !f.t.is_finite() {
                return bad(format!("frame ({}, {}) has non-finite timestamp", f.cam, f.seq));
            }
            f.pose.pose()?;
            if let Some(prev) = last_seq.insert(f.cam.as_str(), f.seq) {
                if f.seq < prev {
                    return bad(format!("seq decreases for camera `{}`", f.cam));
                }
            }
            if !pairs.insert((f.cam.as_str(), f.seq)) {
                return bad(format!("duplicate frame ({}, {})", f.cam, f.seq));
            }
            if f.depth.is_some() && !cam.has_depth {
                return bad(format!("frame ({}, {}) has depth but camera has none", f.cam, f.seq));
            }
            if f.depth.is_none() && cam.has_depth {
                return bad(format!("frame ({}, {}) lacks depth", f.cam, f.seq));
            }
            for p in std::iter::once(&f.rgb).chain(f.depth.as_ref()) {
                if Path::new(p).is_absolute() || p.split(['/', '\\']).any(|c| c == "..") {
                    return bad(format!("path `{p}` escapes the session directory"));
                }
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<SensorRegistry, IngestError> {
        let mut reg = SensorRegistry::new();
        for c in &self.cameras {
            reg.register(c.id.clone(), c.camera()?, c.has_depth)?;
        }
        Ok(reg)
    }
}

/// An opened session directory.
#[derive(Debug, Clone)]
pub struct Session {
    dir: PathBuf,
    manifest: Manifest,
    cameras: HashMap<String, PinholeCamera>,
}

impl Session {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = Manifest::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let cameras = manifest
            .cameras
            .iter()
            .map(|c| Ok((c.id.clone(), c.camera()?)))
            .collect::<Result<_, IngestError>>()?;
        Ok(Self { dir, manifest, cameras })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    /// Decodes frame `i` in manifest order.
    pub fn load_frame(&self, i: usize) -> Result<FrameSample, IngestError> {
        let rec = self
            .manifest
            .frames
            .get(i)
            .ok_or_else(|| IngestError::Manifest(format!("frame index {i} out of range")))?;
        let camera = self.cameras[&rec.cam];
        let rgb = decode_rgb(&fs::read(self.dir.join(&rec.rgb))?)?;
        let depth = match &rec.depth {
            Some(p) => Some(decode_depth(&fs::read(self.dir.join(p))?, self.manifest.depth_scale_m_per_unit)?),
            None => None,
        };
        Ok(FrameSample::new(rec.cam.clone(), rec.seq, rec.t, rgb, depth, rec.pose.pose()?, camera)?)
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<FrameSample, IngestError>> + '_ {
        (0..self.len()).map(move |i| self.load_frame(i))
    }
}

/// Incrementally writes a session directory; the manifest is written by
/// [`SessionWriter::finish`].
#[derive(Debug)]
pub struct SessionWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl SessionWriter {
    pub fn create(dir: impl AsRef<Path>, cameras: Vec<CameraRecord>, depth_scale: f64) -> Result<Self, IngestError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("rgb"))?;
        if cameras.iter().any(|c| c.has_depth) {
            fs::create_dir_all(dir.join("depth"))?;
        }
        let manifest = Manifest {
            cameras,
            frames: Vec::new(),
            depth_scale_m_per_unit: depth_scale,
        };
        manifest.validate()?;
        Ok(Self { dir, manifest })
    }

    pub fn write_frame(&mut self, frame: &FrameSample) -> Result<(), IngestError> {
        frame.validate()?;
        let stem = format!("{}_{:06}", frame.camera_id, frame.seq);
        let rgb = format!("rgb/{stem}.png");
        fs::write(self.dir.join(&rgb), encode_rgb(&frame.rgb)?)?;
        let depth = match &frame.depth {
            Some(d) => {
                let p = format!("depth/{stem}.png");
                fs::write(self.dir.join(&p), encode_depth(d, self.manifest.depth_scale_m_per_unit)?)?;
                Some(p)
            }
            None => None,
        };
        self.manifest.frames.push(FrameRecord {
            cam: frame.camera_id.clone(),
            seq: frame.seq,
            t: frame.timestamp,
            pose: PoseRecord::from(&frame.pose),
            rgb,
            depth,
        });
        Ok(())
    }

    pub fn finish(self) -> Result<Manifest, IngestError> {
        self.manifest.validate()?;
        fs::write(self.dir.join(MANIFEST_FILE), self.manifest.to_json())?;
        Ok(self.manifest)
    }
}

pub fn encode_rgb(img: &RgbImage) -> Result<Vec<u8>, IngestError> {
    let (w, h) = img.dims();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(w as u32, h as u32, img.to_rgb8()).expect("buffer sized to image");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage, IngestError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_rgb8(w as usize, h as usize, img.as_raw())?)
}

/// Quantizes depth to `round(z / scale)` saturating at `u16::MAX`.
pub fn encode_depth(img: &DepthImage, scale: f64) -> Result<Vec<u8>, IngestError> {
    let (w, h) = img.dims();
    let raw: Vec<u16> = img
        .pixels()
        .iter()
        .map(|&z| (z as f64 / scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer sized to image");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_depth(bytes: &[u8], scale: f64) -> Result<DepthImage, IngestError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma16();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| (v as f64 * scale) as f32).collect();
    Ok(DepthImage::from_vec(w as usize, h as usize, data)?)
}
