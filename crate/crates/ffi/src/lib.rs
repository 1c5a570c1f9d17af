//! C ABI for the fisheye Gaussian-splatting library.
//!
//! Every function is callable from C via the generated `include/fsplat.h`
//! header. The conventions are:
//!
//! - Functions return an [`FsplatStatus`] code; results come back through
//!   out-pointers. `FSPLAT_STATUS_OK` (0) means success.
//! - On failure, [`fsplat_last_error_message`] returns a human-readable
//!   description. The string is thread-local and stays valid until the next
//!   failing call on the same thread.
//! - Scenes are opaque handles created by [`fsplat_scene_load`] or
//!   [`fsplat_scene_from_points`] and released with [`fsplat_scene_free`].
//! - All geometry is `double`; matrices are row-major; images are
//!   `height x width x 3` RGB, row-major, values in `[0, 1]`.
//! - Panics never cross the boundary: they are caught and reported as
//!   `FSPLAT_STATUS_INTERNAL_ERROR`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fsplat_core::camera::{CamPoint, CameraPose, FisheyeIntrinsics};
use fsplat_core::checkpoint::{load_checkpoint, CheckpointError};
use fsplat_core::render::{render, RenderOptions};
use fsplat_core::scene::SceneModel;
use nalgebra::{Matrix3, Vector3};

/// Result code returned by every fallible function in this API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsplatStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was structurally valid but semantically wrong
    /// (non-orthonormal rotation, non-increasing distortion, bad sizes, ...).
    InvalidArgument = 2,
    /// A file could not be read or written.
    IoError = 3,
    /// An internal invariant failed; please report this.
    InternalError = 4,
}

/// Fisheye camera intrinsics (equidistant model with a degree-9 odd
/// polynomial in the incidence angle).
///
/// `theta_max` is the largest admitted incidence angle in radians; pass a
/// value `<= 0` to use the library default (100 degrees).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FsplatIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Coefficients of theta^3, theta^5, theta^7, theta^9.
    pub k: [f64; 4],
    pub width: u32,
    pub height: u32,
    pub theta_max: f64,
}

/// World-to-camera rigid transform: `p_cam = R * p_world + t`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FsplatPose {
    /// Rotation matrix, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Opaque scene handle. The struct is never exposed by value.
pub struct FsplatScene {
    scene: SceneModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: FsplatStatus, msg: &str) -> FsplatStatus {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
    status
}

/// Runs a body with panics converted to `InternalError`.
fn guarded(body: impl FnOnce() -> FsplatStatus) -> FsplatStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(FsplatStatus::InternalError, &format!("internal panic: {msg}"))
        }
    }
}

/// Returns a human-readable message for the most recent failure on this
/// thread, or an empty string if there has been none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fsplat_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Returns the library version as a static string.
#[no_mangle]
pub extern "C" fn fsplat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn convert_intrinsics(c: &FsplatIntrinsics) -> Result<FisheyeIntrinsics, String> {
    let theta_max = if c.theta_max > 0.0 {
        c.theta_max
    } else {
        FisheyeIntrinsics::DEFAULT_THETA_MAX
    };
    FisheyeIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.k, c.width, c.height, theta_max)
        .map_err(|e| e.to_string())
}

fn convert_pose(c: &FsplatPose) -> Result<CameraPose, String> {
    let rotation = Matrix3::from_row_slice(&c.rotation);
    let translation = Vector3::new(c.translation[0], c.translation[1], c.translation[2]);
    CameraPose::new(rotation, translation).map_err(|e| e.to_string())
}

/// Checks an intrinsics struct without using it.
///
/// # Safety
/// `intr` must be null or point to a valid [`FsplatIntrinsics`].
#[no_mangle]
pub unsafe extern "C" fn fsplat_intrinsics_validate(intr: *const FsplatIntrinsics) -> FsplatStatus {
    guarded(|| {
        let Some(intr) = (unsafe { intr.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "intr is null");
        };
        match convert_intrinsics(intr) {
            Ok(_) => FsplatStatus::Ok,
            Err(e) => fail(FsplatStatus::InvalidArgument, &e),
        }
    })
}

/// Projects a world-space point to pixel coordinates.
///
/// `world_point` is `[x, y, z]`; on success `pixel_out` receives `[u, v]`.
/// Points behind the camera or outside the admitted field of view are
/// rejected with `InvalidArgument`.
///
/// # Safety
/// All pointers must be null or valid for the documented element counts.
#[no_mangle]
pub unsafe extern "C" fn fsplat_project(
    intr: *const FsplatIntrinsics,
    pose: *const FsplatPose,
    world_point: *const f64,
    pixel_out: *mut f64,
) -> FsplatStatus {
    guarded(|| {
        let Some(intr) = (unsafe { intr.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "intr is null");
        };
        let Some(pose) = (unsafe { pose.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "pose is null");
        };
        if world_point.is_null() {
            return fail(FsplatStatus::NullPointer, "world_point is null");
        }
        if pixel_out.is_null() {
            return fail(FsplatStatus::NullPointer, "pixel_out is null");
        }
        let intrinsics = match convert_intrinsics(intr) {
            Ok(i) => i,
            Err(e) => return fail(FsplatStatus::InvalidArgument, &e),
        };
        let pose = match convert_pose(pose) {
            Ok(p) => p,
            Err(e) => return fail(FsplatStatus::InvalidArgument, &e),
        };
        let p = unsafe { std::slice::from_raw_parts(world_point, 3) };
        let cam = pose.world_to_camera(&Vector3::new(p[0], p[1], p[2]));
        match intrinsics.project(&cam) {
            Ok(pix) => {
                let out = unsafe { std::slice::from_raw_parts_mut(pixel_out, 2) };
                out[0] = pix.x;
                out[1] = pix.y;
                FsplatStatus::Ok
            }
            Err(e) => fail(FsplatStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Computes the 2x3 Jacobian of the pixel projection with respect to the
/// camera-space point, written row-major into `jacobian_out` (6 doubles).
///
/// # Safety
/// All pointers must be null or valid for the documented element counts.
#[no_mangle]
pub unsafe extern "C" fn fsplat_projection_jacobian(
    intr: *const FsplatIntrinsics,
    cam_point: *const f64,
    jacobian_out: *mut f64,
) -> FsplatStatus {
    guarded(|| {
        let Some(intr) = (unsafe { intr.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "intr is null");
        };
        if cam_point.is_null() {
            return fail(FsplatStatus::NullPointer, "cam_point is null");
        }
        if jacobian_out.is_null() {
            return fail(FsplatStatus::NullPointer, "jacobian_out is null");
        }
        let intrinsics = match convert_intrinsics(intr) {
            Ok(i) => i,
            Err(e) => return fail(FsplatStatus::InvalidArgument, &e),
        };
        let p = unsafe { std::slice::from_raw_parts(cam_point, 3) };
        let cam = CamPoint::new(Vector3::new(p[0], p[1], p[2]));
        match intrinsics.projection_jacobian(&cam) {
            Ok(j) => {
                let out = unsafe { std::slice::from_raw_parts_mut(jacobian_out, 6) };
                for r in 0..2 {
                    for c in 0..3 {
                        out[r * 3 + c] = j[(r, c)];
                    }
                }
                FsplatStatus::Ok
            }
            Err(e) => fail(FsplatStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Loads a scene from a training checkpoint file.
///
/// On success `*scene_out` owns the new handle; release it with
/// [`fsplat_scene_free`].
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `scene_out` must be null
/// or a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn fsplat_scene_load(
    path: *const c_char,
    scene_out: *mut *mut FsplatScene,
) -> FsplatStatus {
    guarded(|| {
        if path.is_null() {
            return fail(FsplatStatus::NullPointer, "path is null");
        }
        if scene_out.is_null() {
            return fail(FsplatStatus::NullPointer, "scene_out is null");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => Path::new(s),
            Err(_) => return fail(FsplatStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        match load_checkpoint(path) {
            Ok(state) => {
                let handle = Box::new(FsplatScene { scene: state.scene });
                unsafe { *scene_out = Box::into_raw(handle) };
                FsplatStatus::Ok
            }
            Err(CheckpointError::Io { path, source }) => fail(
                FsplatStatus::IoError,
                &format!("could not read {}: {source}", path.display()),
            ),
            Err(e) => fail(FsplatStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Creates a scene of isotropic Gaussians from a point cloud, one Gaussian
/// per point.
///
/// `positions` holds `3 * count` doubles (`x, y, z` per point) and `colors`
/// holds `3 * count` doubles (`r, g, b` in `[0, 1]`). `sh_degree` is the
/// spherical-harmonics degree to allocate, at most 3.
///
/// # Safety
/// The arrays must be null or valid for `3 * count` elements; `scene_out`
/// must be null or a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn fsplat_scene_from_points(
    positions: *const f64,
    colors: *const f64,
    count: usize,
    sh_degree: u32,
    scene_out: *mut *mut FsplatScene,
) -> FsplatStatus {
    guarded(|| {
        if positions.is_null() {
            return fail(FsplatStatus::NullPointer, "positions is null");
        }
        if colors.is_null() {
            return fail(FsplatStatus::NullPointer, "colors is null");
        }
        if scene_out.is_null() {
            return fail(FsplatStatus::NullPointer, "scene_out is null");
        }
        if count == 0 {
            return fail(FsplatStatus::InvalidArgument, "count must be positive");
        }
        if sh_degree > 3 {
            return fail(
                FsplatStatus::InvalidArgument,
                &format!("sh_degree must be at most 3, got {sh_degree}"),
            );
        }
        let positions = unsafe { std::slice::from_raw_parts(positions, 3 * count) };
        let colors = unsafe { std::slice::from_raw_parts(colors, 3 * count) };
        if !positions.iter().chain(colors).all(|v| v.is_finite()) {
            return fail(FsplatStatus::InvalidArgument, "inputs must be finite");
        }
        let points: Vec<(Vector3<f64>, [f64; 3])> = (0..count)
            .map(|i| {
                (
                    Vector3::new(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]),
                    [colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]],
                )
            })
            .collect();
        let scene = SceneModel::init_from_points(&points, sh_degree as usize);
        unsafe { *scene_out = Box::into_raw(Box::new(FsplatScene { scene })) };
        FsplatStatus::Ok
    })
}

/// Returns the number of Gaussians in the scene, or 0 for a null handle.
///
/// # Safety
/// `scene` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fsplat_scene_gaussian_count(scene: *const FsplatScene) -> usize {
    match unsafe { scene.as_ref() } {
        Some(s) => s.scene.gaussians.len(),
        None => 0,
    }
}

/// Releases a scene handle. Passing null is a no-op.
///
/// # Safety
/// `scene` must be null or a handle from this library that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn fsplat_scene_free(scene: *mut FsplatScene) {
    if !scene.is_null() {
        drop(unsafe { Box::from_raw(scene) });
    }
}

/// Renders the scene from one view into a caller-provided buffer.
///
/// `pixels_out` must hold `width * height * 3` doubles and receives RGB
/// values in `[0, 1]`, row-major from the top-left pixel. `background` may
/// be null for black; `near_limit` values `<= 0` select the default (0.05).
///
/// # Safety
/// All pointers must be null or valid; `pixels_out` must have room for
/// `width * height * 3` doubles as given in `intr`.
#[no_mangle]
pub unsafe extern "C" fn fsplat_render(
    scene: *const FsplatScene,
    pose: *const FsplatPose,
    intr: *const FsplatIntrinsics,
    background: *const f64,
    near_limit: f64,
    pixels_out: *mut f64,
) -> FsplatStatus {
    guarded(|| {
        let Some(scene) = (unsafe { scene.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "scene is null");
        };
        let Some(pose) = (unsafe { pose.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "pose is null");
        };
        let Some(intr) = (unsafe { intr.as_ref() }) else {
            return fail(FsplatStatus::NullPointer, "intr is null");
        };
        if pixels_out.is_null() {
            return fail(FsplatStatus::NullPointer, "pixels_out is null");
        }
        let intrinsics = match convert_intrinsics(intr) {
            Ok(i) => i,
            Err(e) => return fail(FsplatStatus::InvalidArgument, &e),
        };
        let pose = match convert_pose(pose) {
            Ok(p) => p,
            Err(e) => return fail(FsplatStatus::InvalidArgument, &e),
        };
        let mut opts = RenderOptions::default();
        if !background.is_null() {
            let bg = unsafe { std::slice::from_raw_parts(background, 3) };
            opts.background = [bg[0], bg[1], bg[2]];
        }
        if near_limit > 0.0 {
            opts.near = near_limit;
        }
        let rendered = render(&scene.scene, &pose, &intrinsics, &opts);
        let n = rendered.image.data.len();
        let out = unsafe { std::slice::from_raw_parts_mut(pixels_out, n) };
        out.copy_from_slice(&rendered.image.data);
        FsplatStatus::Ok
    })
}
