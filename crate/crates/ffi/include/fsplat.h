/* C interface for the fsplat fisheye Gaussian-splatting library. */

#ifndef FSPLAT_H
#define FSPLAT_H

/* Generated by cbindgen from the fsplat-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code returned by every fallible function in this API.
 */
typedef enum FsplatStatus {
  /**
   * The call succeeded.
   */
  FSPLAT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FSPLAT_STATUS_NULL_POINTER = 1,
  /**
   * An argument was structurally valid but semantically wrong
   * (non-orthonormal rotation, non-increasing distortion, bad sizes, ...).
   */
  FSPLAT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or written.
   */
  FSPLAT_STATUS_IO_ERROR = 3,
  /**
   * An internal invariant failed; please report this.
   */
  FSPLAT_STATUS_INTERNAL_ERROR = 4,
} FsplatStatus;

/**
 * Opaque scene handle. The struct is never exposed by value.
 */
typedef struct FsplatScene FsplatScene;

/**
 * Fisheye camera intrinsics (equidistant model with a degree-9 odd
 * polynomial in the incidence angle).
 *
 * `theta_max` is the largest admitted incidence angle in radians; pass a
 * value `<= 0` to use the library default (100 degrees).
 */
typedef struct FsplatIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  /**
   * Coefficients of theta^3, theta^5, theta^7, theta^9.
   */
  double k[4];
  uint32_t width;
  uint32_t height;
  double theta_max;
} FsplatIntrinsics;

/**
 * World-to-camera rigid transform: `p_cam = R * p_world + t`.
 */
typedef struct FsplatPose {
  /**
   * Rotation matrix, row-major.
   */
  double rotation[9];
  double translation[3];
} FsplatPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns a human-readable message for the most recent failure on this
 * thread, or an empty string if there has been none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *fsplat_last_error_message(void);

/**
 * Returns the library version as a static string.
 */
const char *fsplat_version(void);

/**
 * Checks an intrinsics struct without using it.
 *
 * # Safety
 * `intr` must be null or point to a valid [`FsplatIntrinsics`].
 */
enum FsplatStatus fsplat_intrinsics_validate(const struct FsplatIntrinsics *intr);

/**
 * Projects a world-space point to pixel coordinates.
 *
 * `world_point` is `[x, y, z]`; on success `pixel_out` receives `[u, v]`.
 * Points behind the camera or outside the admitted field of view are
 * rejected with `InvalidArgument`.
 *
 * # Safety
 * All pointers must be null or valid for the documented element counts.
 */
enum FsplatStatus fsplat_project(const struct FsplatIntrinsics *intr,
                                 const struct FsplatPose *pose,
                                 const double *world_point,
                                 double *pixel_out);

/**
 * Computes the 2x3 Jacobian of the pixel projection with respect to the
 * camera-space point, written row-major into `jacobian_out` (6 doubles).
 *
 * # Safety
 * All pointers must be null or valid for the documented element counts.
 */
enum FsplatStatus fsplat_projection_jacobian(const struct FsplatIntrinsics *intr,
                                             const double *cam_point,
                                             double *jacobian_out);

/**
 * Loads a scene from a training checkpoint file.
 *
 * On success `*scene_out` owns the new handle; release it with
 * [`fsplat_scene_free`].
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `scene_out` must be null
 * or a valid out-pointer.
 */
enum FsplatStatus fsplat_scene_load(const char *path, struct FsplatScene **scene_out);

/**
 * Creates a scene of isotropic Gaussians from a point cloud, one Gaussian
 * per point.
 *
 * `positions` holds `3 * count` doubles (`x, y, z` per point) and `colors`
 * holds `3 * count` doubles (`r, g, b` in `[0, 1]`). `sh_degree` is the
 * spherical-harmonics degree to allocate, at most 3.
 *
 * # Safety
 * The arrays must be null or valid for `3 * count` elements; `scene_out`
 * must be null or a valid out-pointer.
 */
enum FsplatStatus fsplat_scene_from_points(const double *positions,
                                           const double *colors,
                                           size_t count,
                                           uint32_t sh_degree,
                                           struct FsplatScene **scene_out);

/**
 * Returns the number of Gaussians in the scene, or 0 for a null handle.
 *
 * # Safety
 * `scene` must be null or a handle from this library.
 */
size_t fsplat_scene_gaussian_count(const struct FsplatScene *scene);

/**
 * Releases a scene handle. Passing null is a no-op.
 *
 * # Safety
 * `scene` must be null or a handle from this library that has not been
 * freed already.
 */
void fsplat_scene_free(struct FsplatScene *scene);

/**
 * Renders the scene from one view into a caller-provided buffer.
 *
 * `pixels_out` must hold `width * height * 3` doubles and receives RGB
 * values in `[0, 1]`, row-major from the top-left pixel. `background` may
 * be null for black; `near_limit` values `<= 0` select the default (0.05).
 *
 * # Safety
 * All pointers must be null or valid; `pixels_out` must have room for
 * `width * height * 3` doubles as given in `intr`.
 */
enum FsplatStatus fsplat_render(const struct FsplatScene *scene,
                                const struct FsplatPose *pose,
                                const struct FsplatIntrinsics *intr,
                                const double *background,
                                double near_limit,
                                double *pixels_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FSPLAT_H */
