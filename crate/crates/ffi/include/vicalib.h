#ifndef VICALIB_H
#define VICALIB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VicalibStatus {
  VICALIB_STATUS_OK = 0,
  VICALIB_STATUS_NULL_POINTER = 1,
  VICALIB_STATUS_INVALID_ARGUMENT = 2,
  VICALIB_STATUS_IO = 3,
  VICALIB_STATUS_PARSE = 4,
  VICALIB_STATUS_NUMERICAL = 5,
  VICALIB_STATUS_PANIC = 6,
} VicalibStatus;

// Opaque calibration (the contents of a calib.txt).
typedef struct VicalibCalibration VicalibCalibration;

// Opaque IMU log.
typedef struct VicalibImuLog VicalibImuLog;

// Opaque pose trajectory.
typedef struct VicalibTrajectory VicalibTrajectory;

// Trajectory evaluation summary. Optional metrics are NaN when undefined.
typedef struct VicalibEvalReport {
  double ate_m;
  double rpe_trans_m;
  double rpe_rot_deg;
  double end_segment_ate_m;
  double length_m;
  bool diverged;
  size_t pairs;
  size_t segments;
} VicalibEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the next
// call into the library from the same thread.
const char *vicalib_last_error(void);

// Library version as a static NUL-terminated string.
const char *vicalib_version(void);

// Loads a trajectory in the mocap.csv schema.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum VicalibStatus vicalib_trajectory_load(const char *path, struct VicalibTrajectory **out);

// Builds a trajectory from `n` stamps (ns, strictly increasing) and `7 n`
// pose values.
//
// # Safety
// `t_ns` must point to `n` values, `poses` to `7 n`; `out` must be writable.
enum VicalibStatus vicalib_trajectory_from_arrays(size_t n,
                                                  const int64_t *t_ns,
                                                  const double *poses,
                                                  struct VicalibTrajectory **out);

// Number of poses; 0 for NULL.
//
// # Safety
// `traj` must be NULL or a live handle.
size_t vicalib_trajectory_len(const struct VicalibTrajectory *traj);

// Copies pose `i` into `out_pose[7]` and its stamp into `out_t_ns`.
//
// # Safety
// `traj` must be a live handle; outputs must be writable.
enum VicalibStatus vicalib_trajectory_get(const struct VicalibTrajectory *traj,
                                          size_t i,
                                          int64_t *out_t_ns,
                                          double *out_pose);

// # Safety
// `traj` must be NULL or a handle not yet freed.
void vicalib_trajectory_free(struct VicalibTrajectory *traj);

// Loads an imu.csv log.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum VicalibStatus vicalib_imu_load(const char *path, struct VicalibImuLog **out);

// Number of samples; 0 for NULL.
//
// # Safety
// `imu` must be NULL or a live handle.
size_t vicalib_imu_len(const struct VicalibImuLog *imu);

// # Safety
// `imu` must be NULL or a handle not yet freed.
void vicalib_imu_free(struct VicalibImuLog *imu);

// Loads a calib.txt file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum VicalibStatus vicalib_calibration_load(const char *path, struct VicalibCalibration **out);

// Applies the IMU intrinsics to one raw reading `gyro[3]`, `accel[3]`,
// writing the calibrated values to `out_gyro[3]`, `out_accel[3]`.
//
// # Safety
// `calib` must be a live handle; arrays must hold 3 doubles each.
enum VicalibStatus vicalib_calibration_apply(const struct VicalibCalibration *calib,
                                             const double *gyro,
                                             const double *accel,
                                             double *out_gyro,
                                             double *out_accel);

// MoCap clock minus IMU clock, nanoseconds.
//
// # Safety
// `calib` must be a live handle; `out_ns` must be writable.
enum VicalibStatus vicalib_calibration_time_shift(const struct VicalibCalibration *calib,
                                                  int64_t *out_ns);

// # Safety
// `calib` must be NULL or a handle not yet freed.
void vicalib_calibration_free(struct VicalibCalibration *calib);

// Estimates the MoCap-minus-IMU clock offset. `step_ns` / `half_window_ns`
// of 0 select the defaults (100 us, 0.5 s).
//
// # Safety
// Handles must be live; `out_offset_ns` must be writable.
enum VicalibStatus vicalib_time_align(const struct VicalibImuLog *imu,
                                      const struct VicalibTrajectory *mocap,
                                      int64_t step_ns,
                                      int64_t half_window_ns,
                                      double *out_offset_ns);

// Hand-eye calibration from `n` pairs of `T_WM` and `T_IG` (7 doubles each,
// packed). Writes `T_MI` and `T_WG` (7 doubles each).
//
// # Safety
// `t_wm`, `t_ig` must hold `7 n` doubles; outputs 7 each.
enum VicalibStatus vicalib_handeye_solve(size_t n,
                                         const double *t_wm,
                                         const double *t_ig,
                                         double *out_t_mi,
                                         double *out_t_wg);

// Overlapping Allan deviation of `n` samples at period `tau0` for each of
// `n_sizes` cluster sizes, written to `out_dev`.
//
// # Safety
// Arrays must hold the stated number of elements.
enum VicalibStatus vicalib_allan_deviation(const double *samples,
                                           size_t n,
                                           double tau0,
                                           const size_t *cluster_sizes,
                                           size_t n_sizes,
                                           double *out_dev);

// ATE, RPE over `delta_s` (0 selects 1 s) and divergence of `est` against
// `gt`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum VicalibStatus vicalib_evaluate(const struct VicalibTrajectory *gt,
                                    const struct VicalibTrajectory *est,
                                    double delta_s,
                                    struct VicalibEvalReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VICALIB_H */
