/* C interface to the fruitmap reconstruction library. */

#ifndef FRUITMAP_H
#define FRUITMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FM_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FM_STATUS_INVALID_UTF8 = 2,
  /**
   * File could not be read or written.
   */
  FM_STATUS_IO = 3,
  /**
   * File contents could not be parsed.
   */
  FM_STATUS_PARSE = 4,
  /**
   * Argument values out of range or inconsistent.
   */
  FM_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Numerical failure inside the library.
   */
  FM_STATUS_NUMERIC = 6,
  /**
   * An internal invariant was violated.
   */
  FM_STATUS_PANIC = 7,
} FmStatus;

/**
 * Opaque point-cloud handle.
 */
typedef struct FmCloud FmCloud;

/**
 * Opaque fused-volume handle.
 */
typedef struct FmGrid FmGrid;

/**
 * Bounded superellipsoid: semi-axes `a, b, c` (metres), shape exponents
 * `eps1, eps2`, world translation `tx, ty, tz` and z-y-x Euler rotation
 * `phi, theta, psi` (radians).
 */
typedef struct FmShape {
  double a;
  double b;
  double c;
  double eps1;
  double eps2;
  double tx;
  double ty;
  double tz;
  double phi;
  double theta;
  double psi;
} FmShape;

/**
 * Result of fitting a shape to a point cluster.
 */
typedef struct FmFitInfo {
  struct FmShape shape;
  double volume_m3;
  double final_cost;
  bool converged;
  uint32_t iterations;
  uint32_t point_count;
} FmFitInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *fm_version(void);

/**
 * Message of the most recent failure on the calling thread, or an empty
 * string. Valid until the next failing call on this thread.
 */
const char *fm_last_error(void);

/**
 * Creates a cloud from `count` points stored as interleaved doubles
 * `[x0, y0, z0, x1, ...]`.
 *
 * # Safety
 * `xyz` must point to `3 * count` doubles (or be null when `count` is 0).
 */
enum FmStatus fm_cloud_from_points(const double *xyz, uintptr_t count, struct FmCloud **out);

/**
 * Reads a `.pcd` or `.ply` file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` a valid pointer.
 */
enum FmStatus fm_cloud_read(const char *path, struct FmCloud **out);

/**
 * Writes the cloud to a `.pcd` or `.ply` file (ASCII encoding).
 *
 * # Safety
 * `cloud` must be a live handle; `path` a nul-terminated string.
 */
enum FmStatus fm_cloud_write(const struct FmCloud *cloud, const char *path);

/**
 * Number of points; 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
uintptr_t fm_cloud_len(const struct FmCloud *cloud);

/**
 * Copies all points into `xyz` as interleaved doubles.
 *
 * # Safety
 * `xyz` must have room for `3 * fm_cloud_len(cloud)` doubles.
 */
enum FmStatus fm_cloud_points(const struct FmCloud *cloud, double *xyz);

/**
 * Releases a cloud handle; null is ignored.
 *
 * # Safety
 * `cloud` must be null or an owned handle not freed before.
 */
void fm_cloud_free(struct FmCloud *cloud);

/**
 * Creates an empty fused volume. Passing 0 for `voxel_size` or
 * `truncation_distance` selects the default (0.004 m / 0.016 m).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FmStatus fm_grid_new(double voxel_size, double truncation_distance, struct FmGrid **out);

/**
 * Fuses a sensor-frame cloud observed from `pose`, given as
 * `[tx, ty, tz, qx, qy, qz, qw]`.
 *
 * # Safety
 * `grid` and `cloud` must be live handles; `pose` must point to 7 doubles.
 */
enum FmStatus fm_grid_integrate(struct FmGrid *grid,
                                const struct FmCloud *cloud,
                                const double *pose);

/**
 * Extracts the zero-crossing surface as a new cloud.
 *
 * # Safety
 * `grid` must be a live handle; `out` a valid pointer.
 */
enum FmStatus fm_grid_extract_surface(const struct FmGrid *grid, struct FmCloud **out);

/**
 * Writes the grid in its versioned binary format.
 *
 * # Safety
 * `grid` must be a live handle; `path` a nul-terminated string.
 */
enum FmStatus fm_grid_write(const struct FmGrid *grid, const char *path);

/**
 * Reads a grid written by [`fm_grid_write`].
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` a valid pointer.
 */
enum FmStatus fm_grid_read(const char *path, struct FmGrid **out);

/**
 * Releases a grid handle; null is ignored.
 *
 * # Safety
 * `grid` must be null or an owned handle not freed before.
 */
void fm_grid_free(struct FmGrid *grid);

/**
 * Estimates normals and a centre for the cluster, then fits a bounded
 * superellipsoid with the default configuration. `normals_k` of 0 selects
 * the default neighbourhood (30).
 *
 * A completed but unconverged fit returns `FM_STATUS_OK` with
 * `info->converged` false.
 *
 * # Safety
 * `cloud` must be a live handle; `info` a valid pointer.
 */
enum FmStatus fm_fit_cluster(const struct FmCloud *cloud,
                             uint32_t normals_k,
                             struct FmFitInfo *info);

/**
 * Enclosed volume in cubic metres; NaN for invalid parameters.
 *
 * # Safety
 * `shape` must be null or a valid pointer.
 */
double fm_shape_volume(const struct FmShape *shape);

/**
 * Radial distance from a world point to the shape surface; NaN for
 * invalid parameters.
 *
 * # Safety
 * `shape` must be null or a valid pointer.
 */
double fm_shape_distance(const struct FmShape *shape, double x, double y, double z);

/**
 * Samples the shape surface on a regular angular grid into a new cloud.
 * `resolution` of 0 selects the default (24); values below 8 are invalid.
 *
 * # Safety
 * `shape` must be a valid pointer; `out` a valid pointer.
 */
enum FmStatus fm_shape_sample(const struct FmShape *shape,
                              uint32_t resolution,
                              struct FmCloud **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRUITMAP_H */
