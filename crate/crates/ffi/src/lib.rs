//! C ABI over the vicalib core.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `*_from_arrays` and released with the matching `*_free`. Every fallible
//! call returns a [`VicalibStatus`]; the message of the most recent failure on
//! the calling thread is available through [`vicalib_last_error`]. Panics are
//! caught and reported as [`VicalibStatus::Panic`].
//!
//! Poses are 7 doubles `tx ty tz qw qx qy qz`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use vicalib::allan;
use vicalib::geometry::{Frame, PoseSample, RigidMotion, Timestamp, Trajectory};
use vicalib::handeye::{self, HandEyeOptions, HandEyePair, HandEyeProblem};
use vicalib::imucal::ImuSample;
use vicalib::ingest::{self, CalibrationFile, IngestError};
use vicalib::timesync::{self, TimeSyncOptions};
use vicalib::trajeval::{self, EvalOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VicalibStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Panic = 6,
}

/// Opaque pose trajectory.
pub struct VicalibTrajectory {
    inner: Trajectory,
}

/// Opaque IMU log.
pub struct VicalibImuLog {
    inner: Vec<ImuSample>,
}

/// Opaque calibration (the contents of a calib.txt).
pub struct VicalibCalibration {
    inner: CalibrationFile,
}

/// Trajectory evaluation summary. Optional metrics are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VicalibEvalReport {
    pub ate_m: f64,
    pub rpe_trans_m: f64,
    pub rpe_rot_deg: f64,
    pub end_segment_ate_m: f64,
    pub length_m: f64,
    pub diverged: bool,
    pub pairs: usize,
    pub segments: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(VicalibStatus, String);

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let status = match e.root() {
            IngestError::Io { .. } => VicalibStatus::Io,
            _ => VicalibStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure(VicalibStatus::Numerical, e.to_string())
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(VicalibStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VicalibStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VicalibStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VicalibStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return Err(Failure(VicalibStatus::NullPointer, concat!("`", stringify!($p), "` is null").into()));
        })+
    };
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    non_null!(p);
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null!(p);
    Ok(std::slice::from_raw_parts(p, n))
}

fn pose_from(v: &[f64]) -> Result<RigidMotion, Failure> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("pose has non-finite entries"));
    }
    let q = [v[3], v[4], v[5], v[6]];
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > ingest::NORM_REJECT {
        return Err(invalid(format!("quaternion norm {norm} too far from 1")));
    }
    Ok(RigidMotion::from_wxyz(q, [v[0], v[1], v[2]]))
}

fn pose_to(p: &RigidMotion, out: &mut [f64]) {
    let t = p.translation();
    let q = p.quaternion_wxyz();
    out.copy_from_slice(&[t[0], t[1], t[2], q[0], q[1], q[2], q[3]]);
}

fn boxed<T>(v: T, out: *mut *mut T) {
    // SAFETY: callers check `out` for null before building `v`
    unsafe { *out = Box::into_raw(Box::new(v)) };
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn vicalib_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vicalib_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a trajectory in the mocap.csv schema.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_trajectory_load(
    path: *const c_char,
    out: *mut *mut VicalibTrajectory,
) -> VicalibStatus {
    guard(|| {
        non_null!(out);
        let (t, _) = ingest::load_mocap(&path_arg(path)?)?;
        boxed(VicalibTrajectory { inner: t }, out);
        Ok(())
    })
}

/// Builds a trajectory from `n` stamps (ns, strictly increasing) and `7 n`
/// pose values.
///
/// # Safety
/// `t_ns` must point to `n` values, `poses` to `7 n`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_trajectory_from_arrays(
    n: usize,
    t_ns: *const i64,
    poses: *const f64,
    out: *mut *mut VicalibTrajectory,
) -> VicalibStatus {
    guard(|| {
        non_null!(out);
        let t = slice(t_ns, n)?;
        let p = slice(poses, n.checked_mul(7).ok_or_else(|| invalid("n too large"))?)?;
        let samples = t
            .iter()
            .zip(p.chunks_exact(7))
            .map(|(&t, v)| Ok(PoseSample::new(Timestamp(t), pose_from(v)?)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let traj = Trajectory::new(Frame::W, Frame::M, samples).map_err(|e| invalid(e.to_string()))?;
        boxed(VicalibTrajectory { inner: traj }, out);
        Ok(())
    })
}

/// Number of poses; 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vicalib_trajectory_len(traj: *const VicalibTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies pose `i` into `out_pose[7]` and its stamp into `out_t_ns`.
///
/// # Safety
/// `traj` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_trajectory_get(
    traj: *const VicalibTrajectory,
    i: usize,
    out_t_ns: *mut i64,
    out_pose: *mut f64,
) -> VicalibStatus {
    guard(|| {
        non_null!(traj, out_t_ns, out_pose);
        let s = (*traj)
            .inner
            .samples()
            .get(i)
            .ok_or_else(|| invalid(format!("index {i} out of range")))?;
        *out_t_ns = s.t.0;
        pose_to(&s.pose, std::slice::from_raw_parts_mut(out_pose, 7));
        Ok(())
    })
}

/// # Safety
/// `traj` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vicalib_trajectory_free(traj: *mut VicalibTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Loads an imu.csv log.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_imu_load(path: *const c_char, out: *mut *mut VicalibImuLog) -> VicalibStatus {
    guard(|| {
        non_null!(out);
        let samples = ingest::load_imu(&path_arg(path)?)?;
        boxed(VicalibImuLog { inner: samples }, out);
        Ok(())
    })
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `imu` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vicalib_imu_len(imu: *const VicalibImuLog) -> usize {
    imu.as_ref().map_or(0, |l| l.inner.len())
}

/// # Safety
/// `imu` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vicalib_imu_free(imu: *mut VicalibImuLog) {
    if !imu.is_null() {
        drop(Box::from_raw(imu));
    }
}

/// Loads a calib.txt file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_calibration_load(
    path: *const c_char,
    out: *mut *mut VicalibCalibration,
) -> VicalibStatus {
    guard(|| {
        non_null!(out);
        let c = ingest::load_calibration(&path_arg(path)?)?;
        boxed(VicalibCalibration { inner: c }, out);
        Ok(())
    })
}

/// Applies the IMU intrinsics to one raw reading `gyro[3]`, `accel[3]`,
/// writing the calibrated values to `out_gyro[3]`, `out_accel[3]`.
///
/// # Safety
/// `calib` must be a live handle; arrays must hold 3 doubles each.
#[no_mangle]
pub unsafe extern "C" fn vicalib_calibration_apply(
    calib: *const VicalibCalibration,
    gyro: *const f64,
    accel: *const f64,
    out_gyro: *mut f64,
    out_accel: *mut f64,
) -> VicalibStatus {
    guard(|| {
        non_null!(calib, out_gyro, out_accel);
        let g = slice(gyro, 3)?;
        let a = slice(accel, 3)?;
        let raw = ImuSample::new(
            Timestamp(0),
            nalgebra_vec(g),
            nalgebra_vec(a),
        );
        let c = (*calib).inner.intrinsics.apply(&raw);
        std::slice::from_raw_parts_mut(out_gyro, 3).copy_from_slice(c.gyro.as_slice());
        std::slice::from_raw_parts_mut(out_accel, 3).copy_from_slice(c.accel.as_slice());
        Ok(())
    })
}

fn nalgebra_vec(v: &[f64]) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(v[0], v[1], v[2])
}

/// MoCap clock minus IMU clock, nanoseconds.
///
/// # Safety
/// `calib` must be a live handle; `out_ns` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_calibration_time_shift(
    calib: *const VicalibCalibration,
    out_ns: *mut i64,
) -> VicalibStatus {
    guard(|| {
        non_null!(calib, out_ns);
        *out_ns = (*calib).inner.mocap_imu_shift_ns;
        Ok(())
    })
}

/// # Safety
/// `calib` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vicalib_calibration_free(calib: *mut VicalibCalibration) {
    if !calib.is_null() {
        drop(Box::from_raw(calib));
    }
}

/// Estimates the MoCap-minus-IMU clock offset. `step_ns` / `half_window_ns`
/// of 0 select the defaults (100 us, 0.5 s).
///
/// # Safety
/// Handles must be live; `out_offset_ns` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_time_align(
    imu: *const VicalibImuLog,
    mocap: *const VicalibTrajectory,
    step_ns: i64,
    half_window_ns: i64,
    out_offset_ns: *mut f64,
) -> VicalibStatus {
    guard(|| {
        non_null!(imu, mocap, out_offset_ns);
        let d = TimeSyncOptions::default();
        let options = TimeSyncOptions {
            step_ns: if step_ns == 0 { d.step_ns } else { step_ns },
            half_window_ns: if half_window_ns == 0 { d.half_window_ns } else { half_window_ns },
            ..d
        };
        let est = timesync::time_align(&(*imu).inner, &(*mocap).inner, &options).map_err(numerical)?;
        *out_offset_ns = est.offset_exact_ns;
        Ok(())
    })
}

/// Hand-eye calibration from `n` pairs of `T_WM` and `T_IG` (7 doubles each,
/// packed). Writes `T_MI` and `T_WG` (7 doubles each).
///
/// # Safety
/// `t_wm`, `t_ig` must hold `7 n` doubles; outputs 7 each.
#[no_mangle]
pub unsafe extern "C" fn vicalib_handeye_solve(
    n: usize,
    t_wm: *const f64,
    t_ig: *const f64,
    out_t_mi: *mut f64,
    out_t_wg: *mut f64,
) -> VicalibStatus {
    guard(|| {
        non_null!(out_t_mi, out_t_wg);
        let len = n.checked_mul(7).ok_or_else(|| invalid("n too large"))?;
        let a = slice(t_wm, len)?;
        let b = slice(t_ig, len)?;
        let pairs = a
            .chunks_exact(7)
            .zip(b.chunks_exact(7))
            .map(|(x, y)| {
                Ok(HandEyePair {
                    t_wm: pose_from(x)?,
                    t_ig: pose_from(y)?,
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        let sol = handeye::solve_handeye(&HandEyeProblem { pairs, initial: None }, &HandEyeOptions::default())
            .map_err(numerical)?;
        pose_to(&sol.t_mi, std::slice::from_raw_parts_mut(out_t_mi, 7));
        pose_to(&sol.t_wg, std::slice::from_raw_parts_mut(out_t_wg, 7));
        Ok(())
    })
}

/// Overlapping Allan deviation of `n` samples at period `tau0` for each of
/// `n_sizes` cluster sizes, written to `out_dev`.
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn vicalib_allan_deviation(
    samples: *const f64,
    n: usize,
    tau0: f64,
    cluster_sizes: *const usize,
    n_sizes: usize,
    out_dev: *mut f64,
) -> VicalibStatus {
    guard(|| {
        let s = slice(samples, n)?;
        let sizes = slice(cluster_sizes, n_sizes)?;
        if n_sizes > 0 {
            non_null!(out_dev);
        }
        let curve = allan::allan_deviation(s, tau0, sizes).map_err(numerical)?;
        std::slice::from_raw_parts_mut(out_dev, n_sizes).copy_from_slice(&curve.dev);
        Ok(())
    })
}

/// ATE, RPE over `delta_s` (0 selects 1 s) and divergence of `est` against
/// `gt`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vicalib_evaluate(
    gt: *const VicalibTrajectory,
    est: *const VicalibTrajectory,
    delta_s: f64,
    out: *mut VicalibEvalReport,
) -> VicalibStatus {
    guard(|| {
        non_null!(gt, est, out);
        let d = EvalOptions::default();
        if !(delta_s >= 0.0 && delta_s.is_finite()) {
            return Err(invalid("delta_s must be finite and non-negative"));
        }
        let options = EvalOptions {
            delta_s: if delta_s == 0.0 { d.delta_s } else { delta_s },
            ..d
        };
        let r = trajeval::evaluate(&(*gt).inner, &(*est).inner, &options).map_err(numerical)?;
        *out = VicalibEvalReport {
            ate_m: r.ate_m,
            rpe_trans_m: r.rpe_trans_m.unwrap_or(f64::NAN),
            rpe_rot_deg: r.rpe_rot_deg.unwrap_or(f64::NAN),
            end_segment_ate_m: r.end_segment_ate_m.unwrap_or(f64::NAN),
            length_m: r.length_m,
            diverged: r.diverged,
            pairs: r.pairs,
            segments: r.segments,
        };
        Ok(())
    })
}
