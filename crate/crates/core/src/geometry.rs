//! Time, rotation and rigid-motion primitives.
//!
//! Quaternions follow the Hamilton convention and are stored w-first. After
//! every construction the sign is fixed so that `w >= 0`, which makes the
//! serialized form of a rotation unique.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Errors raised by trajectory queries.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("timestamp {t} outside trajectory span [{first}, {last}]")]
    OutOfRange { t: i64, first: i64, last: i64 },
    #[error("index {index} has no neighbours on both sides (trajectory length {len})")]
    IndexError { index: usize, len: usize },
    #[error("timestamps not strictly increasing: {prev} followed by {next}")]
    NotMonotonic { prev: i64, next: i64 },
    #[error("trajectory is empty")]
    Empty,
}

/// Signed nanoseconds since an arbitrary per-stream epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_nanos(ns: i64) -> Self {
        Self(ns)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(s: f64) -> Self {
        Self((s * 1e9).round() as i64)
    }

    pub const fn nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub const fn offset(self, ns: i64) -> Self {
        Self(self.0 + ns)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector (axis times angle) to unit quaternion.
pub fn so3_exp(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = phi.norm();
    let half = 0.5 * theta;
    // sin(x/2)/x with a series for tiny angles
    let k = if theta < 1e-6 {
        0.5 - theta * theta / 48.0
    } else {
        half.sin() / theta
    };
    let q = Quaternion::new(half.cos(), k * phi.x, k * phi.y, k * phi.z);
    canonical(UnitQuaternion::new_normalize(q))
}

/// Rotation logarithm as axis times angle, angle in `[0, pi]`.
///
/// Works on the quaternion (`atan2` of the vector part against `w`), which
/// stays accurate near pi where trace-based formulas lose precision.
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(*q);
    let v = q.vector();
    let n = v.norm();
    let w = q.w;
    if n < 1e-12 {
        // 2*atan2(n, w)/n -> 2/w
        return v * (2.0 / w);
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}

/// Smallest rotation angle of `q`, radians.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    so3_log(q).norm()
}

/// Fixes the quaternion sign so that `w >= 0`.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Left Jacobian of SO(3), used by the SE(3) exponential.
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    if theta < 1e-5 {
        return Matrix3::identity() + 0.5 * k + k * k / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() + (1.0 - theta.cos()) / t2 * k + (theta - theta.sin()) / (t2 * theta) * k * k
}

fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    if theta < 1e-5 {
        return Matrix3::identity() - 0.5 * k + k * k / 12.0;
    }
    let half = 0.5 * theta;
    let coeff = (1.0 - half * half.cos() / half.sin()) / (theta * theta);
    Matrix3::identity() - 0.5 * k + coeff * k * k
}

/// Element of SE(3): maps coordinates of the child frame into the parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Renormalizes the rotation unless it is already unit to within a few ulp,
    /// so that stored quaternions reload bit-exactly.
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        let q = rotation.into_inner();
        let n = q.norm();
        let q = if (n - 1.0).abs() > 4.0 * f64::EPSILON {
            q / n
        } else {
            q
        };
        Self {
            rotation: canonical(UnitQuaternion::new_unchecked(q)),
            translation,
        }
    }

    /// Builds from raw `(w, x, y, z)` components; the quaternion is normalized.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Self {
        let q = UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]));
        Self::new(q, Vector3::from(t))
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    pub fn from_rotation(q: UnitQuaternion<f64>) -> Self {
        Self::new(q, Vector3::zeros())
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `(w, x, y, z)` with `w >= 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation;
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        RigidMotion::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidMotion {
        let inv = self.rotation.inverse();
        RigidMotion::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Twist `(rho, phi)`: translational part first, rotation vector second.
    pub fn log(&self) -> Vector6<f64> {
        let phi = so3_log(&self.rotation);
        let rho = so3_left_jacobian_inv(&phi) * self.translation;
        Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
    }

    pub fn exp(xi: &Vector6<f64>) -> RigidMotion {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let phi = Vector3::new(xi[3], xi[4], xi[5]);
        RigidMotion::new(so3_exp(&phi), so3_left_jacobian(&phi) * rho)
    }

    /// Adjoint acting on `(rho, phi)` twists.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation_matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&(hat(&self.translation) * r));
        ad
    }

    /// Rotation angle in radians and translation norm in meters.
    pub fn magnitude(&self) -> (f64, f64) {
        (rotation_angle(&self.rotation), self.translation.norm())
    }
}

/// Small-adjoint matrix of a `(rho, phi)` twist.
pub fn se3_small_adjoint(xi: &Vector6<f64>) -> Matrix6<f64> {
    let rho = Vector3::new(xi[0], xi[1], xi[2]);
    let phi = Vector3::new(xi[3], xi[4], xi[5]);
    let mut ad = Matrix6::zeros();
    let ph = hat(&phi);
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&ph);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&ph);
    ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat(&rho));
    ad
}

impl std::ops::Mul for RigidMotion {
    type Output = RigidMotion;

    fn mul(self, rhs: RigidMotion) -> RigidMotion {
        self.compose(&rhs)
    }
}

impl std::ops::Mul<&RigidMotion> for &RigidMotion {
    type Output = RigidMotion;

    fn mul(self, rhs: &RigidMotion) -> RigidMotion {
        self.compose(rhs)
    }
}

/// Coordinate frames that appear in the rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// MoCap world.
    W,
    /// Marker body.
    M,
    /// IMU.
    I,
    C0,
    C1,
    /// Calibration grid.
    G,
}

impl Frame {
    pub fn label(self) -> &'static str {
        match self {
            Frame::W => "W",
            Frame::M => "M",
            Frame::I => "I",
            Frame::C0 => "C0",
            Frame::C1 => "C1",
            Frame::G => "G",
        }
    }

    pub fn parse(s: &str) -> Option<Frame> {
        Some(match s {
            "W" => Frame::W,
            "M" => Frame::M,
            "I" => Frame::I,
            "C0" => Frame::C0,
            "C1" => Frame::C1,
            "G" => Frame::G,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: Timestamp,
    pub pose: RigidMotion,
}

impl PoseSample {
    pub fn new(t: Timestamp, pose: RigidMotion) -> Self {
        Self { t, pose }
    }
}

/// Time-ordered poses `T_parent_child`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    parent: Frame,
    child: Frame,
    samples: Vec<PoseSample>,
}

impl Trajectory {
    /// Fails if timestamps are not strictly increasing.
    pub fn new(parent: Frame, child: Frame, samples: Vec<PoseSample>) -> Result<Self, GeometryError> {
        if let Some(w) = samples.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(GeometryError::NotMonotonic {
                prev: w[0].t.0,
                next: w[1].t.0,
            });
        }
        Ok(Self {
            parent,
            child,
            samples,
        })
    }

    pub fn parent(&self) -> Frame {
        self.parent
    }

    pub fn child(&self) -> Frame {
        self.child
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<PoseSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_time(&self) -> Option<Timestamp> {
        self.samples.first().map(|s| s.t)
    }

    pub fn last_time(&self) -> Option<Timestamp> {
        self.samples.last().map(|s| s.t)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    /// Same poses with every timestamp moved by `ns`.
    pub fn shifted(&self, ns: i64) -> Trajectory {
        Trajectory {
            parent: self.parent,
            child: self.child,
            samples: self
                .samples
                .iter()
                .map(|s| PoseSample::new(s.t.offset(ns), s.pose))
                .collect(),
        }
    }

    /// Applies `f` to every pose, keeping timestamps, and relabels the frames.
    pub fn map_poses(
        &self,
        parent: Frame,
        child: Frame,
        f: impl Fn(&RigidMotion) -> RigidMotion,
    ) -> Trajectory {
        Trajectory {
            parent,
            child,
            samples: self
                .samples
                .iter()
                .map(|s| PoseSample::new(s.t, f(&s.pose)))
                .collect(),
        }
    }

    /// Index `i` such that `samples[i].t <= t < samples[i+1].t`, clamped.
    fn bracket(&self, t: Timestamp) -> Result<usize, GeometryError> {
        let (first, last) = match (self.first_time(), self.last_time()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(GeometryError::Empty),
        };
        if t < first || t > last {
            return Err(GeometryError::OutOfRange {
                t: t.0,
                first: first.0,
                last: last.0,
            });
        }
        let i = self.samples.partition_point(|s| s.t <= t);
        Ok(i.saturating_sub(1).min(self.samples.len().saturating_sub(2)))
    }

    pub fn interpolate(&self, t: Timestamp) -> Result<RigidMotion, GeometryError> {
        let i = self.bracket(t)?;
        let a = &self.samples[i];
        if a.t == t || self.samples.len() == 1 {
            return Ok(a.pose);
        }
        let b = &self.samples[i + 1];
        if b.t == t {
            return Ok(b.pose);
        }
        let s = (t.0 - a.t.0) as f64 / (b.t.0 - a.t.0) as f64;
        Ok(interpolate_poses(&a.pose, &b.pose, s))
    }

    /// Body-frame angular velocity at sample `i` from its two neighbours.
    pub fn angular_rate_central_diff(&self, i: usize) -> Result<Vector3<f64>, GeometryError> {
        let n = self.samples.len();
        if i == 0 || i + 1 >= n {
            return Err(GeometryError::IndexError { index: i, len: n });
        }
        let prev = &self.samples[i - 1];
        let next = &self.samples[i + 1];
        let dt = (next.t.0 - prev.t.0) as f64 * 1e-9;
        let delta = prev.pose.rotation().inverse() * next.pose.rotation();
        Ok(so3_log(&delta) / dt)
    }

    /// Central-difference angular rates for every interior sample.
    pub fn angular_rates(&self) -> Vec<(Timestamp, Vector3<f64>)> {
        (1..self.samples.len().saturating_sub(1))
            .map(|i| {
                let w = self
                    .angular_rate_central_diff(i)
                    .expect("interior index");
                (self.samples[i].t, w)
            })
            .collect()
    }
}

/// Linear in translation, shorter-arc slerp in rotation; `s` in `[0, 1]`.
pub fn interpolate_poses(a: &RigidMotion, b: &RigidMotion, s: f64) -> RigidMotion {
    let qa = a.rotation();
    let mut qb = *b.rotation();
    if qa.coords.dot(&qb.coords) < 0.0 {
        qb = UnitQuaternion::new_unchecked(-qb.into_inner());
    }
    let delta = qa.inverse() * qb;
    let q = qa * so3_exp(&(so3_log(&delta) * s));
    let t = a.translation() * (1.0 - s) + b.translation() * s;
    RigidMotion::new(q, t)
}
