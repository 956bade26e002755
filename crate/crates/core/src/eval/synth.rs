//! Synthetic orchard scenes: random bounded superellipsoid "fruits" rendered
//! into posed RGB-D frames with depth noise and per-fruit partial occlusion.

use super::{Detection, EvalError};
use crate::segment::{Intrinsics, RgbdFrame};
use crate::superellipsoid::Superellipsoid;
use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Colour painted on fruit pixels; passes the default HSV thresholds.
pub const FRUIT_COLOR: [u8; 3] = [210, 40, 35];
/// Background colour; green hue, rejected by the default thresholds.
pub const BACKGROUND_COLOR: [u8; 3] = [70, 110, 70];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub fruit_count: usize,
    /// Semi-axis sampling range in metres.
    pub axis_range: [f64; 2],
    /// Largest allowed max/min semi-axis ratio.
    pub max_axis_ratio: f64,
    /// Shape-exponent sampling range.
    pub eps_range: [f64; 2],
    /// Fruit centres are drawn uniformly from this box.
    pub region_min: [f64; 3],
    pub region_max: [f64; 3],
    /// Minimum allowed distance between fruit centres in metres.
    pub min_center_spacing: f64,
    /// Range of the surface fraction hidden by each fruit's occluder.
    pub occlusion_range: [f64; 2],
    /// Standard deviation of the along-ray depth noise in metres.
    pub depth_noise_sigma: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub focal_px: f64,
    /// Number of ring cameras (ignored when `viewpoints` is set).
    pub camera_count: usize,
    pub camera_radius: f64,
    /// Ring cameras alternate between +/- this height around the region
    /// centre.
    pub camera_elevation: f64,
    /// Explicit sensor poses `[tx, ty, tz, qx, qy, qz, qw]`; overrides the
    /// generated camera ring when present.
    pub viewpoints: Option<Vec<[f64; 7]>>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 7,
            fruit_count: 10,
            axis_range: [0.025, 0.07],
            max_axis_ratio: 2.0,
            eps_range: [0.5, 0.9],
            region_min: [-0.25, -0.25, -0.12],
            region_max: [0.25, 0.25, 0.12],
            min_center_spacing: 0.18,
            occlusion_range: [0.1, 0.3],
            depth_noise_sigma: 0.002,
            image_width: 320,
            image_height: 240,
            focal_px: 300.0,
            camera_count: 6,
            camera_radius: 0.9,
            camera_elevation: 0.35,
            viewpoints: None,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: &str| Err(EvalError::BadSpec(msg.into()));
        if self.fruit_count == 0 {
            return bad("fruit_count must be at least 1");
        }
        if !(self.axis_range[0] > 0.0 && self.axis_range[0] <= self.axis_range[1]) {
            return bad("axis_range must satisfy 0 < min <= max");
        }
        if self.max_axis_ratio < 1.0 || self.max_axis_ratio.is_nan() {
            return bad("max_axis_ratio must be at least 1");
        }
        if !(self.eps_range[0] > 0.0 && self.eps_range[0] <= self.eps_range[1] && self.eps_range[1] <= 1.0)
        {
            return bad("eps_range must satisfy 0 < min <= max <= 1");
        }
        for i in 0..3 {
            if self.region_min[i] >= self.region_max[i]
                || self.region_min[i].is_nan()
                || self.region_max[i].is_nan()
            {
                return bad("region_min must be strictly below region_max on every axis");
            }
        }
        if !(self.min_center_spacing >= 0.0 && self.min_center_spacing.is_finite()) {
            return bad("min_center_spacing must be non-negative");
        }
        if !(0.0 <= self.occlusion_range[0]
            && self.occlusion_range[0] <= self.occlusion_range[1]
            && self.occlusion_range[1] < 1.0)
        {
            return bad("occlusion_range must satisfy 0 <= min <= max < 1");
        }
        if !(self.depth_noise_sigma >= 0.0 && self.depth_noise_sigma.is_finite()) {
            return bad("depth_noise_sigma must be non-negative");
        }
        if self.image_width < 16 || self.image_height < 16 {
            return bad("image dimensions must be at least 16x16");
        }
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return bad("focal_px must be positive");
        }
        match &self.viewpoints {
            Some(v) if v.is_empty() => return bad("viewpoints, when given, must be non-empty"),
            None => {
                if self.camera_count == 0 {
                    return bad("camera_count must be at least 1");
                }
                if !(self.camera_radius > 0.0 && self.camera_radius.is_finite()) {
                    return bad("camera_radius must be positive");
                }
                if !self.camera_elevation.is_finite() {
                    return bad("camera_elevation must be finite");
                }
            }
            Some(_) => {}
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.focal_px,
            fy: self.focal_px,
            cx: (self.image_width as f64 - 1.0) / 2.0,
            cy: (self.image_height as f64 - 1.0) / 2.0,
        }
    }

    fn region_center(&self) -> Point3<f64> {
        Point3::new(
            (self.region_min[0] + self.region_max[0]) / 2.0,
            (self.region_min[1] + self.region_max[1]) / 2.0,
            (self.region_min[2] + self.region_max[2]) / 2.0,
        )
    }

    /// Sensor poses: explicit viewpoints when given, otherwise a ring of
    /// cameras around the region centre at alternating elevations, all
    /// looking at the centre.
    pub fn camera_poses(&self) -> Result<Vec<Isometry3<f64>>, EvalError> {
        if let Some(views) = &self.viewpoints {
            return views
                .iter()
                .map(|v| {
                    let [tx, ty, tz, qx, qy, qz, qw] = *v;
                    let q = nalgebra::Quaternion::new(qw, qx, qy, qz);
                    if q.norm() < 1e-9 {
                        return Err(EvalError::BadSpec("zero-norm viewpoint quaternion".into()));
                    }
                    Ok(Isometry3::from_parts(
                        Translation3::new(tx, ty, tz),
                        UnitQuaternion::from_quaternion(q),
                    ))
                })
                .collect();
        }
        let target = self.region_center();
        let mut poses = Vec::with_capacity(self.camera_count);
        for k in 0..self.camera_count {
            let angle = 2.0 * PI * k as f64 / self.camera_count as f64;
            let side = if k % 2 == 0 { 1.0 } else { -1.0 };
            let eye = target
                + Vector3::new(
                    self.camera_radius * angle.cos(),
                    self.camera_radius * angle.sin(),
                    side * self.camera_elevation,
                );
            poses.push(look_at_pose(eye, target));
        }
        Ok(poses)
    }
}

/// Pose of a camera at `eye` with its optical (+z) axis through `target`.
/// Image x is horizontal (world-z as "up" reference; +x fallback when the
/// view direction is vertical) and image y completes a right-handed frame.
pub fn look_at_pose(eye: Point3<f64>, target: Point3<f64>) -> Isometry3<f64> {
    let z = (target - eye).normalize();
    let up = if z.z.abs() > 0.99 {
        Vector3::x()
    } else {
        Vector3::z()
    };
    let x = z.cross(&up).normalize();
    let y = z.cross(&x).normalize();
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Isometry3::from_parts(
        Translation3::from(eye.coords),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// A fruit of the scene with its identifier.
#[derive(Debug, Clone)]
pub struct GroundTruthFruit {
    pub id: String,
    pub shape: Superellipsoid,
}

impl GroundTruthFruit {
    pub fn detection(&self) -> Detection {
        Detection {
            label: self.id.clone(),
            center: Point3::from(self.shape.translation),
            volume: self.shape.volume(),
        }
    }
}

/// Half-space occluder attached to a fruit: surface points whose offset from
/// the fruit centre has `direction`-component above `threshold` are hidden.
#[derive(Debug, Clone)]
pub struct Occluder {
    pub direction: Vector3<f64>,
    pub threshold: f64,
}

impl Occluder {
    fn hides(&self, point: &Point3<f64>, center: &Point3<f64>) -> bool {
        (point - center).dot(&self.direction) > self.threshold
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub fruits: Vec<GroundTruthFruit>,
    pub occluders: Vec<Option<Occluder>>,
    pub frames: Vec<RgbdFrame>,
    /// Indices of fruits with no visible pixel in any frame.
    pub unreachable: Vec<usize>,
}

/// Flat, serialisable ground-truth entry (volume in cubic metres).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub volume_m3: f64,
}

impl From<&GroundTruthFruit> for TruthRecord {
    fn from(fruit: &GroundTruthFruit) -> Self {
        let s = &fruit.shape;
        TruthRecord {
            id: fruit.id.clone(),
            a: s.a,
            b: s.b,
            c: s.c,
            eps1: s.eps1,
            eps2: s.eps2,
            tx: s.translation.x,
            ty: s.translation.y,
            tz: s.translation.z,
            phi: s.rotation.x,
            theta: s.rotation.y,
            psi: s.rotation.z,
            volume_m3: s.volume(),
        }
    }
}

impl TruthRecord {
    pub fn fruit(&self) -> Result<GroundTruthFruit, EvalError> {
        let shape = Superellipsoid::new(self.a, self.b, self.c, self.eps1, self.eps2)
            .map_err(|e| EvalError::BadTruth {
                id: self.id.clone(),
                message: e.to_string(),
            })?
            .with_pose(
                Vector3::new(self.tx, self.ty, self.tz),
                Vector3::new(self.phi, self.theta, self.psi),
            );
        Ok(GroundTruthFruit {
            id: self.id.clone(),
            shape,
        })
    }
}

/// Writes the fruit list as a JSON array of [`TruthRecord`]s.
pub fn write_truth(fruits: &[GroundTruthFruit], path: &Path) -> Result<(), EvalError> {
    let records: Vec<TruthRecord> = fruits.iter().map(TruthRecord::from).collect();
    let mut json = serde_json::to_vec_pretty(&records)?;
    json.push(b'\n');
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruthFruit>, EvalError> {
    let bytes = std::fs::read(path)?;
    let records: Vec<TruthRecord> = serde_json::from_slice(&bytes)?;
    records.iter().map(TruthRecord::fruit).collect()
}

fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ (index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn sample_unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Occluder threshold hiding roughly `fraction` of the shape's surface
/// samples along `direction`.
fn occluder_for(shape: &Superellipsoid, direction: Vector3<f64>, fraction: f64) -> Occluder {
    let center = Point3::from(shape.translation);
    let mut dots: Vec<f64> = shape
        .sample_surface(32)
        .points
        .iter()
        .map(|p| (p - center).dot(&direction))
        .collect();
    dots.sort_by(f64::total_cmp);
    let idx = ((1.0 - fraction) * (dots.len() - 1) as f64).round() as usize;
    Occluder {
        direction,
        threshold: dots[idx],
    }
}

/// First intersection of the ray `origin + t * direction` (unit direction)
/// with the shape: bounding-sphere pretest, fixed-step march, bisection
/// refinement.
fn ray_intersect(shape: &Superellipsoid, origin: &Point3<f64>, direction: &Vector3<f64>) -> Option<f64> {
    let center = Point3::from(shape.translation);
    let radius2 = shape.a * shape.a + shape.b * shape.b + shape.c * shape.c;
    let oc = origin - center;
    let b = oc.dot(direction);
    let disc = b * b - (oc.norm_squared() - radius2);
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let t_exit = -b + sqrt_disc;
    if t_exit <= 0.0 {
        return None;
    }
    let t_enter = (-b - sqrt_disc).max(1e-6);

    let inside = |t: f64| shape.implicit_value(shape.to_local(&(origin + t * direction))) <= 1.0;
    let step = (shape.a.min(shape.b).min(shape.c) / 4.0).max(1e-4);
    let mut lo = t_enter;
    if inside(lo) {
        return Some(lo);
    }
    let mut t = lo + step;
    loop {
        let reached_exit = t >= t_exit;
        let probe = if reached_exit { t_exit } else { t };
        if inside(probe) {
            let mut hi = probe;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        if reached_exit {
            return None;
        }
        lo = t;
        t += step;
    }
}

#[derive(Debug, Clone)]
pub struct RenderedViews {
    pub frames: Vec<RgbdFrame>,
    /// Visible (rendered, unoccluded) pixel count per fruit over all frames.
    pub visible_counts: Vec<usize>,
}

/// Renders the fruits into one RGB-D frame per camera pose. `occluders`
/// must have one entry per fruit; a `None` entry leaves that fruit fully
/// visible. Rays whose nearest hit is occluded produce background pixels.
pub fn render_views(
    spec: &SceneSpec,
    fruits: &[GroundTruthFruit],
    occluders: &[Option<Occluder>],
) -> Result<RenderedViews, EvalError> {
    spec.validate()?;
    if occluders.len() != fruits.len() {
        return Err(EvalError::BadSpec(format!(
            "expected {} occluder entries, got {}",
            fruits.len(),
            occluders.len()
        )));
    }
    let poses = spec.camera_poses()?;
    let intrinsics = spec.intrinsics();
    let (w, h) = (spec.image_width, spec.image_height);
    let centers: Vec<Point3<f64>> = fruits
        .iter()
        .map(|f| Point3::from(f.shape.translation))
        .collect();

    let mut frames = Vec::with_capacity(poses.len());
    let mut visible_counts = vec![0usize; fruits.len()];
    for (k, pose) in poses.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, k as u64));
        let mut color = vec![BACKGROUND_COLOR; w * h];
        let mut depth = vec![0.0f32; w * h];
        let origin = Point3::from(pose.translation.vector);
        for v in 0..h {
            for u in 0..w {
                let dir_cam = Vector3::new(
                    (u as f64 - intrinsics.cx) / intrinsics.fx,
                    (v as f64 - intrinsics.cy) / intrinsics.fy,
                    1.0,
                )
                .normalize();
                let dir_world = pose.rotation * dir_cam;
                let mut nearest: Option<(f64, usize)> = None;
                for (i, fruit) in fruits.iter().enumerate() {
                    if let Some(t) = ray_intersect(&fruit.shape, &origin, &dir_world) {
                        if nearest.is_none_or(|(best, _)| t < best) {
                            nearest = Some((t, i));
                        }
                    }
                }
                let Some((t, i)) = nearest else { continue };
                let hit = origin + t * dir_world;
                if let Some(occ) = &occluders[i] {
                    if occ.hides(&hit, &centers[i]) {
                        continue;
                    }
                }
                let t_noisy = if spec.depth_noise_sigma > 0.0 {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    t + spec.depth_noise_sigma * xi
                } else {
                    t
                };
                let z = t_noisy * dir_cam.z;
                if z <= 0.0 {
                    continue;
                }
                let px = v * w + u;
                color[px] = FRUIT_COLOR;
                depth[px] = z as f32;
                visible_counts[i] += 1;
            }
        }
        frames.push(RgbdFrame {
            width: w,
            height: h,
            color,
            depth,
            intrinsics,
            sensor_pose: *pose,
        });
    }
    Ok(RenderedViews {
        frames,
        visible_counts,
    })
}

/// Samples fruits, occluders and rendered frames from the spec. The same
/// spec always yields the same scene.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut centers: Vec<Point3<f64>> = Vec::with_capacity(spec.fruit_count);
    let mut fruits = Vec::with_capacity(spec.fruit_count);
    let mut occluders = Vec::with_capacity(spec.fruit_count);
    for i in 0..spec.fruit_count {
        let mut placed = None;
        for _ in 0..10_000 {
            let candidate = Point3::new(
                rng.random_range(spec.region_min[0]..=spec.region_max[0]),
                rng.random_range(spec.region_min[1]..=spec.region_max[1]),
                rng.random_range(spec.region_min[2]..=spec.region_max[2]),
            );
            if centers
                .iter()
                .all(|c| (c - candidate).norm() >= spec.min_center_spacing)
            {
                placed = Some(candidate);
                break;
            }
        }
        let Some(center) = placed else {
            return Err(EvalError::Placement {
                failed: spec.fruit_count - centers.len(),
                requested: spec.fruit_count,
                spacing: spec.min_center_spacing,
            });
        };
        centers.push(center);

        let [lo, hi] = spec.axis_range;
        let mut axes = [0.0f64; 3];
        for _ in 0..1000 {
            for a in &mut axes {
                *a = rng.random_range(lo..=hi);
            }
            let max = axes.iter().cloned().fold(f64::MIN, f64::max);
            let min = axes.iter().cloned().fold(f64::MAX, f64::min);
            if max <= spec.max_axis_ratio * min {
                break;
            }
        }
        let eps1 = rng.random_range(spec.eps_range[0]..=spec.eps_range[1]);
        let eps2 = rng.random_range(spec.eps_range[0]..=spec.eps_range[1]);
        let rotation = Vector3::new(
            rng.random_range(-PI..PI),
            rng.random_range(-PI / 2.0..PI / 2.0),
            rng.random_range(-PI..PI),
        );
        let shape = Superellipsoid::new(axes[0], axes[1], axes[2], eps1, eps2)
            .expect("sampled parameters are in range")
            .with_pose(center.coords, rotation);

        let direction = sample_unit_vector(&mut rng);
        let fraction = rng.random_range(spec.occlusion_range[0]..=spec.occlusion_range[1]);
        occluders.push((fraction > 0.0).then(|| occluder_for(&shape, direction, fraction)));
        fruits.push(GroundTruthFruit {
            id: format!("fruit_{i:02}"),
            shape,
        });
    }

    let rendered = render_views(spec, &fruits, &occluders)?;
    let unreachable = rendered
        .visible_counts
        .iter()
        .enumerate()
        .filter_map(|(i, &n)| (n == 0).then_some(i))
        .collect();
    Ok(Scene {
        spec: spec.clone(),
        fruits,
        occluders,
        frames: rendered.frames,
        unreachable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            fruit_count: 3,
            image_width: 80,
            image_height: 60,
            focal_px: 75.0,
            camera_count: 3,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Point3::new(1.0, -2.0, 0.5);
        let target = Point3::new(0.0, 0.0, 0.0);
        let pose = look_at_pose(eye, target);
        let z_world = pose.rotation * Vector3::z();
        let expect = (target - eye).normalize();
        assert_abs_diff_eq!(z_world.x, expect.x, epsilon = 1e-12);
        assert_abs_diff_eq!(z_world.y, expect.y, epsilon = 1e-12);
        assert_abs_diff_eq!(z_world.z, expect.z, epsilon = 1e-12);
        // Proper rotation.
        let r = pose.rotation.to_rotation_matrix();
        assert_abs_diff_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-12);
        // Vertical view falls back to the +x reference without degenerating.
        let top = look_at_pose(Point3::new(0.0, 0.0, 2.0), target);
        assert_abs_diff_eq!(
            top.rotation.to_rotation_matrix().matrix().determinant(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let spec = small_spec();
        let s1 = generate_scene(&spec).unwrap();
        let s2 = generate_scene(&spec).unwrap();
        let r1: Vec<TruthRecord> = s1.fruits.iter().map(TruthRecord::from).collect();
        let r2: Vec<TruthRecord> = s2.fruits.iter().map(TruthRecord::from).collect();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
        assert_eq!(s1.frames.len(), s2.frames.len());
        for (f1, f2) in s1.frames.iter().zip(&s2.frames) {
            assert_eq!(f1.depth, f2.depth);
            assert_eq!(f1.color, f2.color);
        }
        // A different seed produces different fruit.
        let other = generate_scene(&SceneSpec {
            seed: 8,
            ..spec
        })
        .unwrap();
        let r3: Vec<TruthRecord> = other.fruits.iter().map(TruthRecord::from).collect();
        assert_ne!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r3).unwrap()
        );
    }

    #[test]
    fn fruit_spacing_and_parameter_ranges_hold() {
        let scene = generate_scene(&SceneSpec {
            fruit_count: 8,
            ..small_spec()
        })
        .unwrap();
        let spec = &scene.spec;
        for (i, fi) in scene.fruits.iter().enumerate() {
            let s = &fi.shape;
            for axis in [s.a, s.b, s.c] {
                assert!(axis >= spec.axis_range[0] && axis <= spec.axis_range[1]);
            }
            let max = s.a.max(s.b).max(s.c);
            let min = s.a.min(s.b).min(s.c);
            assert!(max <= spec.max_axis_ratio * min * (1.0 + 1e-12));
            for eps in [s.eps1, s.eps2] {
                assert!(eps >= spec.eps_range[0] && eps <= spec.eps_range[1]);
            }
            for (j, fj) in scene.fruits.iter().enumerate().skip(i + 1) {
                let d = (fi.shape.translation - fj.shape.translation).norm();
                assert!(
                    d >= spec.min_center_spacing,
                    "fruits {i} and {j} are {d} m apart"
                );
            }
        }
    }

    #[test]
    fn impossible_spacing_reports_placement_failure() {
        let err = generate_scene(&SceneSpec {
            fruit_count: 50,
            min_center_spacing: 10.0,
            ..small_spec()
        })
        .unwrap_err();
        assert!(matches!(err, EvalError::Placement { .. }));
    }

    /// Rendered depth must agree with ray/sphere geometry: every valid pixel
    /// of a noise-free render of a single sphere back-projects onto the
    /// sphere surface.
    #[test]
    fn rendered_depth_back_projects_onto_surface() {
        let sphere = GroundTruthFruit {
            id: "s".into(),
            shape: Superellipsoid::new(0.05, 0.05, 0.05, 1.0, 1.0)
                .unwrap()
                .with_pose(Vector3::new(0.02, -0.03, 0.01), Vector3::zeros()),
        };
        let spec = SceneSpec {
            depth_noise_sigma: 0.0,
            ..small_spec()
        };
        let views = render_views(&spec, std::slice::from_ref(&sphere), &[None]).unwrap();
        let mut checked = 0usize;
        for frame in &views.frames {
            let k = &frame.intrinsics;
            for v in 0..frame.height {
                for u in 0..frame.width {
                    let z = frame.depth[v * frame.width + u] as f64;
                    if z <= 0.0 {
                        continue;
                    }
                    let cam = Point3::new(
                        (u as f64 - k.cx) * z / k.fx,
                        (v as f64 - k.cy) * z / k.fy,
                        z,
                    );
                    let world = frame.sensor_pose * cam;
                    let r = (world - Point3::from(sphere.shape.translation)).norm();
                    // f32 depth quantisation dominates the error budget.
                    assert_abs_diff_eq!(r, 0.05, epsilon = 5e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100, "only {checked} surface pixels rendered");
        assert_eq!(views.visible_counts[0], checked);
    }

    /// With an occluder, every rendered point satisfies the half-space test
    /// and the visible pixel count drops.
    #[test]
    fn occluder_hides_a_surface_cap() {
        let fruit = GroundTruthFruit {
            id: "f".into(),
            shape: Superellipsoid::new(0.06, 0.05, 0.04, 0.8, 0.7)
                .unwrap()
                .with_pose(Vector3::zeros(), Vector3::new(0.3, -0.2, 0.9)),
        };
        let spec = SceneSpec {
            depth_noise_sigma: 0.0,
            ..small_spec()
        };
        let occ = occluder_for(&fruit.shape, Vector3::new(0.0, 0.0, 1.0), 0.3);
        let full = render_views(&spec, std::slice::from_ref(&fruit), &[None]).unwrap();
        let part =
            render_views(&spec, std::slice::from_ref(&fruit), &[Some(occ.clone())]).unwrap();
        assert!(part.visible_counts[0] < full.visible_counts[0]);
        assert!(part.visible_counts[0] > 0);
        let center = Point3::from(fruit.shape.translation);
        for frame in &part.frames {
            let k = &frame.intrinsics;
            for v in 0..frame.height {
                for u in 0..frame.width {
                    let z = frame.depth[v * frame.width + u] as f64;
                    if z <= 0.0 {
                        continue;
                    }
                    let cam = Point3::new(
                        (u as f64 - k.cx) * z / k.fx,
                        (v as f64 - k.cy) * z / k.fy,
                        z,
                    );
                    let world = frame.sensor_pose * cam;
                    let dot = (world - center).dot(&occ.direction);
                    assert!(dot <= occ.threshold + 1e-5, "occluded point rendered");
                }
            }
        }
    }

    #[test]
    fn fruit_behind_every_camera_is_unreachable() {
        // One explicit viewpoint looking along +x from (2,0,0): the fruit at
        // the origin is behind the camera.
        let pose = look_at_pose(Point3::new(2.0, 0.0, 0.0), Point3::new(3.0, 0.0, 0.0));
        let q = pose.rotation.quaternion();
        let spec = SceneSpec {
            fruit_count: 1,
            viewpoints: Some(vec![[2.0, 0.0, 0.0, q.i, q.j, q.k, q.w]]),
            ..small_spec()
        };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.unreachable, vec![0]);
        assert!(scene.frames[0].depth.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn truth_records_roundtrip_through_json() {
        let scene = generate_scene(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.json");
        write_truth(&scene.fruits, &path).unwrap();
        let back = read_truth(&path).unwrap();
        assert_eq!(back.len(), scene.fruits.len());
        for (orig, read) in scene.fruits.iter().zip(&back) {
            assert_eq!(orig.id, read.id);
            assert_eq!(orig.shape.a, read.shape.a);
            assert_eq!(orig.shape.eps1, read.shape.eps1);
            assert_eq!(orig.shape.translation, read.shape.translation);
            assert_eq!(orig.shape.rotation, read.shape.rotation);
        }
    }

    #[test]
    fn fruit_and_background_colors_respect_default_thresholds() {
        use crate::segment::{rgb_to_hsv, HsvThresholds};
        let t = HsvThresholds::default();
        let (h, s, v) = rgb_to_hsv(FRUIT_COLOR);
        assert!((h <= t.hue_max_deg || h >= t.hue_min_deg) && s >= t.sat_min && v >= t.val_min);
        let (h, s, v) = rgb_to_hsv(BACKGROUND_COLOR);
        assert!(!((h <= t.hue_max_deg || h >= t.hue_min_deg) && s >= t.sat_min && v >= t.val_min));
    }
}
