//! RGB-D frames, colour segmentation, back-projection, Euclidean clustering
//! and cluster centre estimation.

use crate::cloud::{KnnIndex, PointCloud};
use nalgebra::{Isometry3, Matrix3, Point3, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid frame: {0}")]
    BadFrame(String),
    #[error("mask size {mask_w}x{mask_h} does not match frame {frame_w}x{frame_h}")]
    MaskMismatch {
        mask_w: usize,
        mask_h: usize,
        frame_w: usize,
        frame_h: usize,
    },
    #[error("invalid cluster parameters: {0}")]
    BadParams(String),
    #[error("no usable normals")]
    NoUsableNormals,
    #[error("centre estimation system is singular")]
    SingularSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Registered colour + depth image with the sensor-to-world pose.
///
/// `color` and `depth` are row-major with `width * height` entries; depth is
/// in metres and non-positive or non-finite entries mark invalid pixels.
#[derive(Debug, Clone)]
pub struct RgbdFrame {
    pub width: usize,
    pub height: usize,
    pub color: Vec<[u8; 3]>,
    pub depth: Vec<f32>,
    pub intrinsics: Intrinsics,
    pub sensor_pose: Isometry3<f64>,
}

impl RgbdFrame {
    pub fn validate(&self) -> Result<(), SegmentError> {
        let n = self.width * self.height;
        if self.color.len() != n || self.depth.len() != n {
            return Err(SegmentError::BadFrame(format!(
                "buffer sizes ({}, {}) do not match {}x{}",
                self.color.len(),
                self.depth.len(),
                self.width,
                self.height
            )));
        }
        if !(self.intrinsics.fx > 0.0 && self.intrinsics.fy > 0.0) {
            return Err(SegmentError::BadFrame("non-positive focal length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Hue/saturation/value window for fruit pixels. Hue wraps around red:
/// a pixel passes when `hue <= hue_max_deg` or `hue >= hue_min_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsvThresholds {
    pub hue_max_deg: f64,
    pub hue_min_deg: f64,
    pub sat_min: f64,
    pub val_min: f64,
}

impl Default for HsvThresholds {
    fn default() -> Self {
        HsvThresholds {
            hue_max_deg: 20.0,
            hue_min_deg: 340.0,
            sat_min: 0.5,
            val_min: 0.2,
        }
    }
}

/// Hue in degrees [0, 360), saturation and value in [0, 1].
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let r = r as f64 / 255.0;
    let g = g as f64 / 255.0;
    let b = b as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let value = max;
    let saturation = if max > 0.0 { delta / max } else { 0.0 };
    let hue = if delta <= 0.0 {
        0.0
    } else if max == r {
        let h = 60.0 * (g - b) / delta;
        if h < 0.0 {
            h + 360.0
        } else {
            h
        }
    } else if max == g {
        60.0 * (b - r) / delta + 120.0
    } else {
        60.0 * (r - g) / delta + 240.0
    };
    (hue, saturation, value)
}

/// Marks pixels whose colour falls inside the HSV window.
pub fn threshold_mask(frame: &RgbdFrame, thresholds: &HsvThresholds) -> Mask {
    let data = frame
        .color
        .iter()
        .map(|&rgb| {
            let (h, s, v) = rgb_to_hsv(rgb);
            (h <= thresholds.hue_max_deg || h >= thresholds.hue_min_deg)
                && s >= thresholds.sat_min
                && v >= thresholds.val_min
        })
        .collect();
    Mask {
        width: frame.width,
        height: frame.height,
        data,
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub cloud: PointCloud,
    /// Masked pixels dropped for invalid depth.
    pub skipped_pixels: usize,
}

fn project(frame: &RgbdFrame, mask: &Mask, to_world: bool) -> Result<Projection, SegmentError> {
    frame.validate()?;
    if mask.width != frame.width || mask.height != frame.height {
        return Err(SegmentError::MaskMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            frame_w: frame.width,
            frame_h: frame.height,
        });
    }
    let mut cloud = PointCloud::new(if to_world { "world" } else { "sensor" });
    let mut colors = Vec::new();
    let mut skipped = 0usize;
    let k = &frame.intrinsics;
    for v in 0..frame.height {
        for u in 0..frame.width {
            let i = v * frame.width + u;
            if !mask.data[i] {
                continue;
            }
            let z = frame.depth[i] as f64;
            if !(z > 0.0 && z.is_finite()) {
                skipped += 1;
                continue;
            }
            let p = Point3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z);
            cloud
                .points
                .push(if to_world { frame.sensor_pose * p } else { p });
            colors.push(frame.color[i]);
        }
    }
    cloud.colors = Some(colors);
    Ok(Projection {
        cloud,
        skipped_pixels: skipped,
    })
}

/// Back-projects masked pixels into the world frame via the pinhole model
/// and the sensor pose.
pub fn mask_to_cloud(frame: &RgbdFrame, mask: &Mask) -> Result<Projection, SegmentError> {
    project(frame, mask, true)
}

/// Back-projects masked pixels, leaving the points in the sensor frame
/// (as needed for TSDF integration together with the pose).
pub fn mask_to_cloud_sensor(frame: &RgbdFrame, mask: &Mask) -> Result<Projection, SegmentError> {
    project(frame, mask, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Points closer than this (metres) are connected.
    pub tolerance: f64,
    pub min_size: usize,
    pub max_size: usize,
    /// Centre-estimation pull toward the cluster centroid.
    pub lambda: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            tolerance: 0.01,
            min_size: 100,
            max_size: 10_000,
            lambda: 2.5,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SegmentError::BadParams("tolerance must be positive".into()));
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return Err(SegmentError::BadParams(
                "need 0 < min_size <= max_size".into(),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SegmentError::BadParams("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Cluster {
    pub points: PointCloud,
    /// Indices into the cloud the cluster was extracted from, ascending.
    pub indices: Vec<usize>,
    pub center: Option<Point3<f64>>,
}

/// Connected components under the relation "distance <= tolerance", with a
/// size window. Clusters are ordered by their smallest member index and
/// members keep the input order, so output is deterministic.
pub fn euclidean_cluster(cloud: &PointCloud, params: &ClusterParams) -> Vec<Cluster> {
    let n = cloud.len();
    if n == 0 {
        return Vec::new();
    }
    let index = KnnIndex::build(&cloud.points);
    let mut parent: Vec<u32> = (0..n as u32).collect();

    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }

    for i in 0..n {
        for j in index.within_radius(&cloud.points[i], params.tolerance) {
            let (a, b) = (find(&mut parent, i as u32), find(&mut parent, j as u32));
            if a != b {
                // Root at the smaller index keeps grouping deterministic.
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi as usize] = lo;
            }
        }
    }

    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i as u32);
        groups.entry(root).or_default().push(i);
    }
    groups
        .into_values()
        .filter(|members| members.len() >= params.min_size && members.len() <= params.max_size)
        .map(|indices| Cluster {
            points: cloud.select(&indices),
            indices,
            center: None,
        })
        .collect()
}

/// Least-squares intersection of the lines along the points' normals,
/// regularised toward the centroid of all cluster points:
/// minimises `Σ ‖(I - nᵢnᵢᵀ)(w - pᵢ)‖² + λ‖w - p̄‖²`.
///
/// Points without a valid normal contribute only to the centroid. The
/// solution is invariant to normal sign flips.
pub fn estimate_center(points: &PointCloud, lambda: f64) -> Result<Point3<f64>, SegmentError> {
    let centroid = points.centroid().ok_or(SegmentError::NoUsableNormals)?;
    let mut a = Matrix3::identity() * lambda;
    let mut rhs = centroid.coords * lambda;
    let mut usable = 0usize;
    for (i, p) in points.points.iter().enumerate() {
        let Some(normal) = points.normal(i) else {
            continue;
        };
        let n = normal.normalize();
        let proj = Matrix3::identity() - n * n.transpose();
        a += proj;
        rhs += proj * p.coords;
        usable += 1;
    }
    if usable == 0 {
        return Err(SegmentError::NoUsableNormals);
    }
    if a.determinant().abs() < 1e-18 {
        return Err(SegmentError::SingularSystem);
    }
    a.lu()
        .solve(&rhs)
        .map(Point3::from)
        .ok_or(SegmentError::SingularSystem)
}

// ------------------------------------------------------------ frame files

/// Sidecar metadata stored next to each frame's colour and depth images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMeta {
    /// Sensor-to-world pose as `[tx, ty, tz, qx, qy, qz, qw]`.
    pub pose: [f64; 7],
    /// `[fx, fy, cx, cy]`.
    pub intrinsics: [f64; 4],
    /// Metres per depth-image unit.
    pub depth_scale: f64,
}

impl FrameMeta {
    pub fn pose_isometry(&self) -> Result<Isometry3<f64>, SegmentError> {
        let [tx, ty, tz, qx, qy, qz, qw] = self.pose;
        let q = Quaternion::new(qw, qx, qy, qz);
        if q.norm() < 1e-9 {
            return Err(SegmentError::BadFrame("zero-norm pose quaternion".into()));
        }
        Ok(Isometry3::from_parts(
            Translation3::new(tx, ty, tz),
            UnitQuaternion::from_quaternion(q),
        ))
    }

    pub fn from_pose(pose: &Isometry3<f64>, intrinsics: &Intrinsics, depth_scale: f64) -> Self {
        let t = pose.translation;
        let q = pose.rotation.quaternion();
        FrameMeta {
            pose: [t.x, t.y, t.z, q.i, q.j, q.k, q.w],
            intrinsics: [intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy],
            depth_scale,
        }
    }
}

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

/// Writes `<stem>.color.png` (RGB8), `<stem>.depth.png` (16-bit, metres /
/// depth_scale) and `<stem>.json` into `dir`.
pub fn save_frame(frame: &RgbdFrame, dir: &Path, stem: &str) -> Result<(), SegmentError> {
    frame.validate()?;
    let (w, h) = (frame.width as u32, frame.height as u32);
    let mut color = image::RgbImage::new(w, h);
    for (i, px) in frame.color.iter().enumerate() {
        color.put_pixel((i % frame.width) as u32, (i / frame.width) as u32, image::Rgb(*px));
    }
    color.save(dir.join(format!("{stem}.color.png")))?;

    let mut depth = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w, h);
    for (i, &d) in frame.depth.iter().enumerate() {
        let raw = if d.is_finite() && d > 0.0 {
            (d as f64 / DEFAULT_DEPTH_SCALE).round().clamp(0.0, u16::MAX as f64) as u16
        } else {
            0
        };
        depth.put_pixel((i % frame.width) as u32, (i / frame.width) as u32, image::Luma([raw]));
    }
    depth.save(dir.join(format!("{stem}.depth.png")))?;

    let meta = FrameMeta::from_pose(&frame.sensor_pose, &frame.intrinsics, DEFAULT_DEPTH_SCALE);
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

pub fn load_frame(dir: &Path, stem: &str) -> Result<RgbdFrame, SegmentError> {
    let meta: FrameMeta = serde_json::from_slice(&std::fs::read(
        dir.join(format!("{stem}.json")),
    )?)?;
    let color = image::open(dir.join(format!("{stem}.color.png")))?.to_rgb8();
    let depth = image::open(dir.join(format!("{stem}.depth.png")))?.to_luma16();
    if color.dimensions() != depth.dimensions() {
        return Err(SegmentError::BadFrame(format!(
            "colour {:?} and depth {:?} sizes differ",
            color.dimensions(),
            depth.dimensions()
        )));
    }
    let (w, h) = color.dimensions();
    let frame = RgbdFrame {
        width: w as usize,
        height: h as usize,
        color: color.pixels().map(|p| p.0).collect(),
        depth: depth
            .pixels()
            .map(|p| (p.0[0] as f64 * meta.depth_scale) as f32)
            .collect(),
        intrinsics: Intrinsics {
            fx: meta.intrinsics[0],
            fy: meta.intrinsics[1],
            cx: meta.intrinsics[2],
            cy: meta.intrinsics[3],
        },
        sensor_pose: meta.pose_isometry()?,
    };
    frame.validate()?;
    Ok(frame)
}

/// Frame stems in `dir` (files named `<stem>.json` with colour and depth
/// siblings), sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<String>, SegmentError> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path: PathBuf = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if let Some(stem) = name.strip_suffix(".json") {
            if dir.join(format!("{stem}.color.png")).exists()
                && dir.join(format!("{stem}.depth.png")).exists()
            {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}
