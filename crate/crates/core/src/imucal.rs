//! IMU intrinsics: axis scaling / misalignment matrices and constant biases.
//!
//! Calibrated measurements are obtained from raw ones as
//! `a = M_a * a_raw - b_a` and `w = M_g * w_raw - b_g`. `M_a` is lower
//! triangular (the accelerometer triad defines the IMU frame), `M_g` is a full
//! 3x3 matrix. Both are estimated here by linear least squares against
//! reference rates and specific forces expressed in the IMU frame.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{Timestamp, Trajectory};

/// Standard gravity, m/s^2, acting along world -z.
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Smallest accepted ratio between the smallest and largest singular value of
/// the (column-normalized) regressor.
pub const EXCITATION_THRESHOLD: f64 = 1e-6;

/// Largest accepted condition number of `M_a` / `M_g`.
pub const MAX_CONDITION: f64 = 1e6;

pub fn gravity_vector() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImuCalError {
    #[error("{which} is singular or ill-conditioned (condition number {condition:e})")]
    SingularMatrix { which: &'static str, condition: f64 },
    #[error("M_a must be lower triangular, entry ({row},{col}) = {value}")]
    NotLowerTriangular { row: usize, col: usize, value: f64 },
    #[error("degenerate excitation: weak direction along {axis} (singular value ratio {ratio:e})")]
    DegenerateExcitation { axis: &'static str, ratio: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("raw and reference series differ in length ({raw} vs {reference})")]
    LengthMismatch { raw: usize, reference: usize },
}

/// One IMU reading: angular rate in rad/s, specific force in m/s^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: Timestamp,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    /// Carried through but not used by any estimator.
    pub temp_c: Option<f64>,
}

impl ImuSample {
    pub fn new(t: Timestamp, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self {
            t,
            gyro,
            accel,
            temp_c: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuIntrinsics {
    pub m_a: Matrix3<f64>,
    pub m_g: Matrix3<f64>,
    pub b_a: Vector3<f64>,
    pub b_g: Vector3<f64>,
}

impl Default for ImuIntrinsics {
    fn default() -> Self {
        Self::identity()
    }
}

fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

impl ImuIntrinsics {
    pub fn identity() -> Self {
        Self {
            m_a: Matrix3::identity(),
            m_g: Matrix3::identity(),
            b_a: Vector3::zeros(),
            b_g: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), ImuCalError> {
        for (row, col) in [(0, 1), (0, 2), (1, 2)] {
            let value = self.m_a[(row, col)];
            if value != 0.0 {
                return Err(ImuCalError::NotLowerTriangular { row, col, value });
            }
        }
        for (which, m) in [("M_a", &self.m_a), ("M_g", &self.m_g)] {
            let condition = condition_number(m);
            if !(condition < MAX_CONDITION) {
                return Err(ImuCalError::SingularMatrix { which, condition });
            }
        }
        Ok(())
    }

    /// Raw to calibrated; time stamp and temperature are kept.
    pub fn apply(&self, raw: &ImuSample) -> ImuSample {
        ImuSample {
            t: raw.t,
            gyro: self.m_g * raw.gyro - self.b_g,
            accel: self.m_a * raw.accel - self.b_a,
            temp_c: raw.temp_c,
        }
    }

    /// Calibrated to raw; inverse of [`ImuIntrinsics::apply`].
    pub fn invert(&self, clean: &ImuSample) -> Result<ImuSample, ImuCalError> {
        let solve = |which: &'static str, m: &Matrix3<f64>, rhs: Vector3<f64>| {
            let condition = condition_number(m);
            if !(condition < MAX_CONDITION) {
                return Err(ImuCalError::SingularMatrix { which, condition });
            }
            m.lu()
                .solve(&rhs)
                .ok_or(ImuCalError::SingularMatrix { which, condition })
        };
        Ok(ImuSample {
            t: clean.t,
            gyro: solve("M_g", &self.m_g, clean.gyro + self.b_g)?,
            accel: solve("M_a", &self.m_a, clean.accel + self.b_a)?,
            temp_c: clean.temp_c,
        })
    }
}

pub fn apply_calibration(raw: &ImuSample, intr: &ImuIntrinsics) -> ImuSample {
    intr.apply(raw)
}

pub fn invert_calibration(clean: &ImuSample, intr: &ImuIntrinsics) -> Result<ImuSample, ImuCalError> {
    intr.invert(clean)
}

const REGRESSOR_AXES: [&str; 4] = ["x", "y", "z", "bias"];

/// Regressor with rows `[x, y, z, -1]`.
fn regressor(raw: &[Vector3<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(raw.len(), 4, |r, c| if c < 3 { raw[r][c] } else { -1.0 })
}

fn check_inputs(raw: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<(), ImuCalError> {
    if raw.len() != reference.len() {
        return Err(ImuCalError::LengthMismatch {
            raw: raw.len(),
            reference: reference.len(),
        });
    }
    if raw.len() < 12 {
        return Err(ImuCalError::TooFewSamples {
            needed: 12,
            got: raw.len(),
        });
    }
    Ok(())
}

/// Rejects regressors whose columns do not span four independent directions.
fn check_excitation(a: &DMatrix<f64>) -> Result<(), ImuCalError> {
    // normalize columns so that units do not skew the ratio
    let mut scaled = a.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let svd = scaled.svd(false, true);
    let sv = &svd.singular_values;
    let (imin, min) = sv.argmin();
    let ratio = min / sv.max();
    if ratio.is_finite() && ratio > EXCITATION_THRESHOLD {
        return Ok(());
    }
    let v_t = svd.v_t.expect("requested V^T");
    let weak = (0..4)
        .max_by(|&a, &b| v_t[(imin, a)].abs().total_cmp(&v_t[(imin, b)].abs()))
        .unwrap_or(0);
    Err(ImuCalError::DegenerateExcitation {
        axis: REGRESSOR_AXES[weak],
        ratio: if ratio.is_finite() { ratio } else { 0.0 },
    })
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("SVD with U and V^T")
}

/// Fits `reference ≈ M_g * raw - b_g` with all nine entries of `M_g` free.
pub fn estimate_gyro_intrinsics(
    raw_gyro: &[Vector3<f64>],
    reference_omega: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>), ImuCalError> {
    check_inputs(raw_gyro, reference_omega)?;
    let a = regressor(raw_gyro);
    check_excitation(&a)?;
    let svd = a.svd(true, true);
    let mut m = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for row in 0..3 {
        let rhs = DVector::from_iterator(reference_omega.len(), reference_omega.iter().map(|w| w[row]));
        let x = svd.solve(&rhs, 1e-14).expect("SVD with U and V^T");
        for col in 0..3 {
            m[(row, col)] = x[col];
        }
        b[row] = x[3];
    }
    Ok((m, b))
}

/// Fits `reference ≈ M_a * raw - b_a` with `M_a` lower triangular.
///
/// Row `r` of `M_a` only sees raw axes `0..=r`; the entries above the
/// diagonal are exactly zero.
pub fn estimate_accel_intrinsics(
    raw_accel: &[Vector3<f64>],
    reference_specific_force: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>), ImuCalError> {
    check_inputs(raw_accel, reference_specific_force)?;
    let full = regressor(raw_accel);
    check_excitation(&full)?;
    let mut m = Matrix3::zeros();
    let mut b = Vector3::zeros();
    let n = raw_accel.len();
    for row in 0..3 {
        let cols: Vec<usize> = (0..=row).chain(std::iter::once(3)).collect();
        let a = DMatrix::from_fn(n, cols.len(), |r, c| full[(r, cols[c])]);
        let rhs = DVector::from_iterator(n, reference_specific_force.iter().map(|f| f[row]));
        let x = least_squares(&a, &rhs);
        for (k, &col) in cols.iter().enumerate() {
            if col < 3 {
                m[(row, col)] = x[k];
            } else {
                b[row] = x[k];
            }
        }
    }
    Ok((m, b))
}

/// Reference angular rate and specific force in the IMU frame, derived from an
/// IMU ground-truth trajectory `T_WI`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReference {
    pub t: Timestamp,
    pub omega: Vector3<f64>,
    pub specific_force: Vector3<f64>,
}

/// Central differences of orientation (rates) and second-order central
/// differences of position (accelerations), gravity-compensated and rotated
/// into the body frame: `f = R^T (p'' - g)`.
pub fn reference_from_trajectory(gt: &Trajectory, gravity: &Vector3<f64>) -> Vec<ImuReference> {
    let s = gt.samples();
    (1..s.len().saturating_sub(1))
        .map(|i| {
            let (p0, p1, p2) = (&s[i - 1], &s[i], &s[i + 1]);
            let h0 = (p1.t.0 - p0.t.0) as f64 * 1e-9;
            let h1 = (p2.t.0 - p1.t.0) as f64 * 1e-9;
            // second derivative on a possibly non-uniform grid
            let acc = 2.0
                * (h0 * p2.pose.translation() - (h0 + h1) * p1.pose.translation()
                    + h1 * p0.pose.translation())
                / (h0 * h1 * (h0 + h1));
            let omega = gt.angular_rate_central_diff(i).expect("interior index");
            ImuReference {
                t: p1.t,
                omega,
                specific_force: p1.pose.rotation().inverse() * (acc - gravity),
            }
        })
        .collect()
}

/// Like [`reference_from_trajectory`] but differencing over `stride` and
/// `2 * stride` samples and combining both by Richardson extrapolation,
/// `(4 D_k - D_2k) / 3`. Wide stencils suppress pose noise (which the second
/// difference amplifies by `1 / h^2`) while the extrapolation cancels the
/// leading truncation term. Samples whose stencil spans a gap (spacing off by
/// more than 1 %) are skipped.
pub fn reference_from_trajectory_smoothed(
    gt: &Trajectory,
    gravity: &Vector3<f64>,
    stride: usize,
) -> Vec<ImuReference> {
    let k = stride.max(1);
    let s = gt.samples();
    let n = s.len();
    if n < 4 * k + 1 {
        return Vec::new();
    }
    let secs = |a: usize, b: usize| (s[b].t.0 - s[a].t.0) as f64 * 1e-9;
    let diffs = |i: usize, m: usize| {
        let h = 0.5 * secs(i - m, i + m);
        let r = s[i - m].pose.rotation().inverse() * s[i + m].pose.rotation();
        let omega = crate::geometry::so3_log(&r) / (2.0 * h);
        let acc = (s[i + m].pose.translation() - 2.0 * s[i].pose.translation() + s[i - m].pose.translation())
            / (h * h);
        (omega, acc)
    };
    (2 * k..n - 2 * k)
        .filter(|&i| {
            let h = secs(i - k, i);
            [secs(i, i + k), 0.5 * secs(i - 2 * k, i), 0.5 * secs(i, i + 2 * k)]
                .iter()
                .all(|x| (x - h).abs() <= 0.01 * h)
        })
        .map(|i| {
            let (w1, a1) = diffs(i, k);
            let (w2, a2) = diffs(i, 2 * k);
            let omega = (4.0 * w1 - w2) / 3.0;
            let acc = (4.0 * a1 - a2) / 3.0;
            ImuReference {
                t: s[i].t,
                omega,
                specific_force: s[i].pose.rotation().inverse() * (acc - gravity),
            }
        })
        .collect()
}

/// Cubic (Catmull-Rom) interpolation of raw IMU channels at time `t`.
///
/// Returns `None` when `t` lacks two samples on each side.
pub fn interpolate_imu(samples: &[ImuSample], t: Timestamp) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let i = samples.partition_point(|s| s.t <= t);
    if i < 2 || i + 1 >= samples.len() {
        return None;
    }
    let (s0, s1, s2, s3) = (&samples[i - 2], &samples[i - 1], &samples[i], &samples[i + 1]);
    let u = (t.0 - s1.t.0) as f64 / (s2.t.0 - s1.t.0) as f64;
    let h = (s2.t.0 - s1.t.0) as f64;
    // tangents scaled to the central interval, valid for non-uniform spacing
    let tangent = |a: &Vector3<f64>, b: &Vector3<f64>, ta: i64, tb: i64| (b - a) * (h / (tb - ta) as f64);
    let hermite = |p1: Vector3<f64>, p2: Vector3<f64>, m1: Vector3<f64>, m2: Vector3<f64>| {
        let u2 = u * u;
        let u3 = u2 * u;
        p1 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + m1 * (u3 - 2.0 * u2 + u)
            + p2 * (-2.0 * u3 + 3.0 * u2)
            + m2 * (u3 - u2)
    };
    let gyro = hermite(
        s1.gyro,
        s2.gyro,
        tangent(&s0.gyro, &s2.gyro, s0.t.0, s2.t.0),
        tangent(&s1.gyro, &s3.gyro, s1.t.0, s3.t.0),
    );
    let accel = hermite(
        s1.accel,
        s2.accel,
        tangent(&s0.accel, &s2.accel, s0.t.0, s2.t.0),
        tangent(&s1.accel, &s3.accel, s1.t.0, s3.t.0),
    );
    Some((gyro, accel))
}
