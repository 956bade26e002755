//! C ABI over the reconstruction library: opaque handles, integer status
//! codes, and a per-thread error message for the last failure.
//!
//! Every function is safe to call from any thread. Pointers returned by
//! [`fm_last_error`] stay valid until the next failing call on the same
//! thread; handle pointers stay valid until passed to their `_free`
//! function.

use fruitmap::cloud::io::{format_from_path, read_cloud, write_cloud, Encoding};
use fruitmap::cloud::{estimate_normals, PointCloud};
use fruitmap::fit::{fit_superellipsoid, FitConfig};
use fruitmap::segment::{estimate_center, Cluster};
use fruitmap::superellipsoid::Superellipsoid;
use fruitmap::tsdf::{PosedCloud, TsdfConfig, TsdfGrid};
use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// File could not be read or written.
    Io = 3,
    /// File contents could not be parsed.
    Parse = 4,
    /// Argument values out of range or inconsistent.
    InvalidArgument = 5,
    /// Numerical failure inside the library.
    Numeric = 6,
    /// An internal invariant was violated.
    Panic = 7,
}

/// Opaque point-cloud handle.
pub struct FmCloud(PointCloud);

/// Opaque fused-volume handle.
pub struct FmGrid(TsdfGrid);

/// Bounded superellipsoid: semi-axes `a, b, c` (metres), shape exponents
/// `eps1, eps2`, world translation `tx, ty, tz` and z-y-x Euler rotation
/// `phi, theta, psi` (radians).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmShape {
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
}

/// Result of fitting a shape to a point cluster.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmFitInfo {
    pub shape: FmShape,
    pub volume_m3: f64,
    pub final_cost: f64,
    pub converged: bool,
    pub iterations: u32,
    pub point_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: FmStatus, message: impl Into<String>) -> FmStatus {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(text).expect("nul bytes scrubbed"));
    });
    status
}

fn fail_null(name: &str) -> FmStatus {
    fail(FmStatus::NullArgument, format!("{name} is null"))
}

fn guarded(f: impl FnOnce() -> FmStatus) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".into());
            fail(FmStatus::Panic, msg)
        }
    }
}

/// # Safety
/// `ptr` must be null or a nul-terminated string.
unsafe fn arg_path<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, FmStatus> {
    if ptr.is_null() {
        return Err(fail_null(name));
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(fail(
            FmStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )),
    }
}

fn shape_from_c(shape: &FmShape) -> Result<Superellipsoid, FmStatus> {
    Superellipsoid::new(shape.a, shape.b, shape.c, shape.eps1, shape.eps2)
        .map(|s| {
            s.with_pose(
                Vector3::new(shape.tx, shape.ty, shape.tz),
                Vector3::new(shape.phi, shape.theta, shape.psi),
            )
        })
        .map_err(|e| fail(FmStatus::InvalidArgument, e.to_string()))
}

fn shape_to_c(shape: &Superellipsoid) -> FmShape {
    FmShape {
        a: shape.a,
        b: shape.b,
        c: shape.c,
        eps1: shape.eps1,
        eps2: shape.eps2,
        tx: shape.translation.x,
        ty: shape.translation.y,
        tz: shape.translation.z,
        phi: shape.rotation.x,
        theta: shape.rotation.y,
        psi: shape.rotation.z,
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on the calling thread, or an empty
/// string. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.as_ptr(),
        None => c"".as_ptr(),
    })
}

// ------------------------------------------------------------------ cloud

/// Creates a cloud from `count` points stored as interleaved doubles
/// `[x0, y0, z0, x1, ...]`.
///
/// # Safety
/// `xyz` must point to `3 * count` doubles (or be null when `count` is 0).
#[no_mangle]
pub unsafe extern "C" fn fm_cloud_from_points(
    xyz: *const f64,
    count: usize,
    out: *mut *mut FmCloud,
) -> FmStatus {
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail_null("out");
    };
    if count > 0 && xyz.is_null() {
        return fail_null("xyz");
    }
    let coords = if count == 0 {
        &[][..]
    } else {
        unsafe { std::slice::from_raw_parts(xyz, 3 * count) }
    };
    guarded(|| {
        let points = coords
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        *out = Box::into_raw(Box::new(FmCloud(PointCloud::from_points(points, "world"))));
        FmStatus::Ok
    })
}

/// Reads a `.pcd` or `.ply` file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_cloud_read(path: *const c_char, out: *mut *mut FmCloud) -> FmStatus {
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail_null("out");
    };
    let path = match unsafe { arg_path(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| {
        let Some(format) = format_from_path(path) else {
            return fail(
                FmStatus::InvalidArgument,
                format!("unrecognised cloud extension: {}", path.display()),
            );
        };
        match read_cloud(path, format) {
            Ok(cloud) => {
                *out = Box::into_raw(Box::new(FmCloud(cloud)));
                FmStatus::Ok
            }
            Err(fruitmap::cloud::CloudError::Io(e)) => fail(FmStatus::Io, e.to_string()),
            Err(e) => fail(FmStatus::Parse, e.to_string()),
        }
    })
}

/// Writes the cloud to a `.pcd` or `.ply` file (ASCII encoding).
///
/// # Safety
/// `cloud` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fm_cloud_write(cloud: *const FmCloud, path: *const c_char) -> FmStatus {
    let Some(cloud) = (unsafe { cloud.as_ref() }) else {
        return fail_null("cloud");
    };
    let path = match unsafe { arg_path(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| {
        let Some(format) = format_from_path(path) else {
            return fail(
                FmStatus::InvalidArgument,
                format!("unrecognised cloud extension: {}", path.display()),
            );
        };
        match write_cloud(&cloud.0, path, format, Encoding::Ascii) {
            Ok(()) => FmStatus::Ok,
            Err(fruitmap::cloud::CloudError::Io(e)) => fail(FmStatus::Io, e.to_string()),
            Err(e) => fail(FmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_cloud_len(cloud: *const FmCloud) -> usize {
    unsafe { cloud.as_ref() }.map_or(0, |c| c.0.len())
}

/// Copies all points into `xyz` as interleaved doubles.
///
/// # Safety
/// `xyz` must have room for `3 * fm_cloud_len(cloud)` doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_cloud_points(cloud: *const FmCloud, xyz: *mut f64) -> FmStatus {
    let Some(cloud) = (unsafe { cloud.as_ref() }) else {
        return fail_null("cloud");
    };
    if xyz.is_null() {
        return fail_null("xyz");
    }
    let buffer = unsafe { std::slice::from_raw_parts_mut(xyz, 3 * cloud.0.len()) };
    for (chunk, p) in buffer.chunks_exact_mut(3).zip(&cloud.0.points) {
        chunk.copy_from_slice(&[p.x, p.y, p.z]);
    }
    FmStatus::Ok
}

/// Releases a cloud handle; null is ignored.
///
/// # Safety
/// `cloud` must be null or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fm_cloud_free(cloud: *mut FmCloud) {
    if !cloud.is_null() {
        drop(unsafe { Box::from_raw(cloud) });
    }
}

// ------------------------------------------------------------------- grid

/// Creates an empty fused volume. Passing 0 for `voxel_size` or
/// `truncation_distance` selects the default (0.004 m / 0.016 m).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_new(
    voxel_size: f64,
    truncation_distance: f64,
    out: *mut *mut FmGrid,
) -> FmStatus {
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail_null("out");
    };
    guarded(|| {
        let mut config = TsdfConfig::default();
        if voxel_size != 0.0 {
            config.voxel_size = voxel_size;
        }
        if truncation_distance != 0.0 {
            config.truncation_distance = truncation_distance;
        }
        match TsdfGrid::new(config) {
            Ok(grid) => {
                *out = Box::into_raw(Box::new(FmGrid(grid)));
                FmStatus::Ok
            }
            Err(e) => fail(FmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Fuses a sensor-frame cloud observed from `pose`, given as
/// `[tx, ty, tz, qx, qy, qz, qw]`.
///
/// # Safety
/// `grid` and `cloud` must be live handles; `pose` must point to 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_integrate(
    grid: *mut FmGrid,
    cloud: *const FmCloud,
    pose: *const f64,
) -> FmStatus {
    let Some(grid) = (unsafe { grid.as_mut() }) else {
        return fail_null("grid");
    };
    let Some(cloud) = (unsafe { cloud.as_ref() }) else {
        return fail_null("cloud");
    };
    if pose.is_null() {
        return fail_null("pose");
    }
    let pose = unsafe { std::slice::from_raw_parts(pose, 7) };
    guarded(|| {
        let q = Quaternion::new(pose[6], pose[3], pose[4], pose[5]);
        if q.norm() < 1e-9 {
            return fail(FmStatus::InvalidArgument, "zero-norm pose quaternion");
        }
        let sensor_pose = Isometry3::from_parts(
            Translation3::new(pose[0], pose[1], pose[2]),
            UnitQuaternion::from_quaternion(q),
        );
        match grid.0.integrate(&PosedCloud {
            cloud: cloud.0.clone(),
            sensor_pose,
        }) {
            Ok(()) => FmStatus::Ok,
            Err(e) => fail(FmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Extracts the zero-crossing surface as a new cloud.
///
/// # Safety
/// `grid` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_extract_surface(
    grid: *const FmGrid,
    out: *mut *mut FmCloud,
) -> FmStatus {
    let Some(grid) = (unsafe { grid.as_ref() }) else {
        return fail_null("grid");
    };
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail_null("out");
    };
    guarded(|| {
        *out = Box::into_raw(Box::new(FmCloud(grid.0.extract_surface())));
        FmStatus::Ok
    })
}

/// Writes the grid in its versioned binary format.
///
/// # Safety
/// `grid` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_write(grid: *const FmGrid, path: *const c_char) -> FmStatus {
    let Some(grid) = (unsafe { grid.as_ref() }) else {
        return fail_null("grid");
    };
    let path = match unsafe { arg_path(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| match grid.0.write(path) {
        Ok(()) => FmStatus::Ok,
        Err(fruitmap::tsdf::TsdfError::Io(e)) => fail(FmStatus::Io, e.to_string()),
        Err(e) => fail(FmStatus::InvalidArgument, e.to_string()),
    })
}

/// Reads a grid written by [`fm_grid_write`].
///
/// # Safety
/// `path` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_read(path: *const c_char, out: *mut *mut FmGrid) -> FmStatus {
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail_null("out");
    };
    let path = match unsafe { arg_path(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| match TsdfGrid::read(path) {
        Ok(grid) => {
            *out = Box::into_raw(Box::new(FmGrid(grid)));
            FmStatus::Ok
        }
        Err(fruitmap::tsdf::TsdfError::Io(e)) => fail(FmStatus::Io, e.to_string()),
        Err(e) => fail(FmStatus::Parse, e.to_string()),
    })
}

/// Releases a grid handle; null is ignored.
///
/// # Safety
/// `grid` must be null or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_free(grid: *mut FmGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

// -------------------------------------------------------------------- fit

/// Estimates normals and a centre for the cluster, then fits a bounded
/// superellipsoid with the default configuration. `normals_k` of 0 selects
/// the default neighbourhood (30).
///
/// A completed but unconverged fit returns `FM_STATUS_OK` with
/// `info->converged` false.
///
/// # Safety
/// `cloud` must be a live handle; `info` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_fit_cluster(
    cloud: *const FmCloud,
    normals_k: u32,
    info: *mut FmFitInfo,
) -> FmStatus {
    let Some(cloud) = (unsafe { cloud.as_ref() }) else {
        return fail_null("cloud");
    };
    let Some(info) = (unsafe { info.as_mut() }) else {
        return fail_null("info");
    };
    guarded(|| {
        let k = if normals_k == 0 { 30 } else { normals_k as usize };
        let points = match estimate_normals(&cloud.0, k) {
            Ok(points) => points,
            Err(e) => return fail(FmStatus::InvalidArgument, e.to_string()),
        };
        let center = match estimate_center(&points, 2.5) {
            Ok(center) => center,
            Err(e) => return fail(FmStatus::Numeric, e.to_string()),
        };
        let indices = (0..points.len()).collect();
        let cluster = Cluster {
            points,
            indices,
            center: Some(center),
        };
        match fit_superellipsoid(&cluster, &FitConfig::default()) {
            Ok(result) => {
                *info = FmFitInfo {
                    shape: shape_to_c(&result.shape),
                    volume_m3: result.shape.volume(),
                    final_cost: result.final_cost,
                    converged: result.converged,
                    iterations: result.iterations as u32,
                    point_count: result.point_count as u32,
                };
                FmStatus::Ok
            }
            Err(e) => fail(FmStatus::Numeric, e.to_string()),
        }
    })
}

// ------------------------------------------------------------------ shape

/// Enclosed volume in cubic metres; NaN for invalid parameters.
///
/// # Safety
/// `shape` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_shape_volume(shape: *const FmShape) -> f64 {
    let Some(shape) = (unsafe { shape.as_ref() }) else {
        return f64::NAN;
    };
    match shape_from_c(shape) {
        Ok(s) => s.volume(),
        Err(_) => f64::NAN,
    }
}

/// Radial distance from a world point to the shape surface; NaN for
/// invalid parameters.
///
/// # Safety
/// `shape` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_shape_distance(
    shape: *const FmShape,
    x: f64,
    y: f64,
    z: f64,
) -> f64 {
    let Some(shape) = (unsafe { shape.as_ref() }) else {
        return f64::NAN;
    };
    match shape_from_c(shape) {
        Ok(s) => s.distance_to_world_point(&Point3::new(x, y, z)),
        Err(_) => f64::NAN,
    }
}

/// Samples the shape surface on a regular angular grid into a new cloud.
/// `resolution` of 0 selects the default (24); values below 8 are invalid.
///
/// # Safety
/// `shape` must be a valid pointer; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_shape_sample(
    shape: *const FmShape,
    resolution: u32,
    out: *mut *mut FmCloud,
) -> FmStatus {
    let Some(shape) = (unsafe { shape.as_ref() }) else {
        return fail_null("shape");
    };
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail_null("out");
    };
    guarded(|| {
        let resolution = if resolution == 0 { 24 } else { resolution as usize };
        if resolution < 8 {
            return fail(FmStatus::InvalidArgument, "resolution must be at least 8");
        }
        let s = match shape_from_c(shape) {
            Ok(s) => s,
            Err(status) => return status,
        };
        *out = Box::into_raw(Box::new(FmCloud(s.sample_surface(resolution))));
        FmStatus::Ok
    })
}
