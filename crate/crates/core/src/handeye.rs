//! Hand-eye calibration: marker-to-IMU transform `T_MI` and world-to-grid
//! transform `T_WG` from synchronized pairs `(T_WM_i, T_IG_i)`, with
//! `T_WG = T_WM_i * T_MI * T_IG_i` for every pair.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::geometry::{se3_small_adjoint, so3_log, Frame, RigidMotion, Trajectory};

/// Minimum angle between two relative-rotation axes.
pub const MIN_AXIS_SPREAD_DEG: f64 = 15.0;
/// Relative rotations smaller than this carry no usable axis.
const MIN_RELATIVE_ANGLE: f64 = 1e-3;
const MAX_AXES: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandEyeError {
    #[error("need at least 3 pose pairs, got {0}")]
    TooFewPairs(usize),
    #[error("relative rotation axes span only {spread_deg:.3} deg (need > {MIN_AXIS_SPREAD_DEG})")]
    DegenerateMotion { spread_deg: f64 },
    #[error("normal equations are singular")]
    Singular,
}

type Result<T> = std::result::Result<T, HandEyeError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandEyePair {
    pub t_wm: RigidMotion,
    pub t_ig: RigidMotion,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HandEyeProblem {
    pub pairs: Vec<HandEyePair>,
    /// `(T_MI, T_WG)`; computed from relative motions when absent.
    pub initial: Option<(RigidMotion, RigidMotion)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandEyeOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    /// Residual weight on the translational part of the log, per metre.
    pub translation_weight: f64,
    /// Residual weight on the rotational part, per radian.
    pub rotation_weight: f64,
}

impl Default for HandEyeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tolerance: 1e-10,
            translation_weight: 1.0,
            rotation_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandEyeSolution {
    pub t_mi: RigidMotion,
    pub t_wg: RigidMotion,
    /// RMS of the unweighted 6-vector residual norms.
    pub rms_residual: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; the best iterate is returned.
    pub converged: bool,
}

/// `log(T_WG^-1 * T_WM * T_MI * T_IG)` in `(rho, phi)` order.
pub fn residual(pair: &HandEyePair, t_mi: &RigidMotion, t_wg: &RigidMotion) -> Vector6<f64> {
    (t_wg.inverse() * pair.t_wm * *t_mi * pair.t_ig).log()
}

pub fn rms_residual(pairs: &[HandEyePair], t_mi: &RigidMotion, t_wg: &RigidMotion) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let ss: f64 = pairs.iter().map(|p| residual(p, t_mi, t_wg).norm_squared()).sum();
    (ss / pairs.len() as f64).sqrt()
}

fn quat_left(q: &UnitQuaternion<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix4::new(w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w)
}

fn quat_right(q: &UnitQuaternion<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix4::new(w, -x, -y, -z, x, w, z, -y, y, -z, w, x, z, y, -x, w)
}

/// Index pairs used for relative motions: neighbours plus a half-sequence
/// stride for larger baselines.
fn relative_indices(n: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let stride = n / 2;
    if stride > 1 {
        out.extend((0..n - stride).map(|i| (i, i + stride)));
    }
    out
}

/// Relative motions `(A, B)` with `A X = X B`, `X = T_MI`.
fn relative_motions(pairs: &[HandEyePair]) -> Vec<(RigidMotion, RigidMotion)> {
    relative_indices(pairs.len())
        .into_iter()
        .map(|(i, j)| {
            let a = pairs[j].t_wm.inverse() * pairs[i].t_wm;
            let b = pairs[j].t_ig * pairs[i].t_ig.inverse();
            (a, b)
        })
        .collect()
}

/// Largest angle in degrees between any two relative-rotation axes, treated
/// as undirected lines.
pub fn axis_spread_deg(pairs: &[HandEyePair]) -> f64 {
    let mut axes: Vec<Vector3<f64>> = relative_motions(pairs)
        .iter()
        .filter_map(|(a, _)| {
            let phi = so3_log(a.rotation());
            (phi.norm() > MIN_RELATIVE_ANGLE).then(|| phi.normalize())
        })
        .collect();
    if axes.len() > MAX_AXES {
        let stride = axes.len().div_ceil(MAX_AXES);
        axes = axes.into_iter().step_by(stride).collect();
    }
    let mut min_cos: f64 = 1.0;
    for (i, a) in axes.iter().enumerate() {
        for b in &axes[i + 1..] {
            min_cos = min_cos.min(a.dot(b).abs());
        }
    }
    min_cos.clamp(0.0, 1.0).acos().to_degrees()
}

/// Closed-form starting point from relative motions: rotation from the null
/// space of the stacked quaternion constraints, translation by least squares,
/// and `T_WG` from the first pair.
pub fn initial_guess(pairs: &[HandEyePair]) -> Result<(RigidMotion, RigidMotion)> {
    if pairs.len() < 3 {
        return Err(HandEyeError::TooFewPairs(pairs.len()));
    }
    let rel: Vec<_> = relative_motions(pairs)
        .into_iter()
        .filter(|(a, _)| so3_log(a.rotation()).norm() > MIN_RELATIVE_ANGLE)
        .collect();
    if rel.len() < 2 {
        let x = RigidMotion::identity();
        return Ok((x, pairs[0].t_wm * x * pairs[0].t_ig));
    }

    let mut m = Matrix4::zeros();
    for (a, b) in &rel {
        let qa = crate::geometry::canonical(*a.rotation());
        let qb = crate::geometry::canonical(*b.rotation());
        let d = quat_left(&qa) - quat_right(&qb);
        m += d.transpose() * d;
    }
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(k);
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
    let r = q.to_rotation_matrix().into_inner();

    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (a, b) in &rel {
        let c = a.rotation_matrix() - Matrix3::identity();
        let rhs = r * b.translation() - a.translation();
        ata += c.transpose() * c;
        atb += c.transpose() * rhs;
    }
    let t = ata.cholesky().map(|ch| ch.solve(&atb)).unwrap_or_else(Vector3::zeros);
    let x = RigidMotion::new(q, t);
    Ok((x, pairs[0].t_wm * x * pairs[0].t_ig))
}

/// Inverse right Jacobian of SE(3) to second order.
fn jr_inv(r: &Vector6<f64>) -> SMatrix<f64, 6, 6> {
    let ad = se3_small_adjoint(r);
    SMatrix::<f64, 6, 6>::identity() + ad * 0.5 + ad * ad / 12.0
}

/// Gauss-Newton on `SE(3) x SE(3)` with right perturbations
/// `T_MI exp(dx)`, `T_WG exp(dy)`.
pub fn solve_handeye(problem: &HandEyeProblem, options: &HandEyeOptions) -> Result<HandEyeSolution> {
    let pairs = &problem.pairs;
    if pairs.len() < 3 {
        return Err(HandEyeError::TooFewPairs(pairs.len()));
    }
    let spread = axis_spread_deg(pairs);
    if !(spread > MIN_AXIS_SPREAD_DEG) {
        return Err(HandEyeError::DegenerateMotion { spread_deg: spread });
    }
    let (mut x, mut y) = match problem.initial {
        Some(init) => init,
        None => initial_guess(pairs)?,
    };
    let w = Vector6::new(
        options.translation_weight,
        options.translation_weight,
        options.translation_weight,
        options.rotation_weight,
        options.rotation_weight,
        options.rotation_weight,
    );
    let weighted_cost = |x: &RigidMotion, y: &RigidMotion| -> f64 {
        pairs
            .iter()
            .map(|p| residual(p, x, y).component_mul(&w).norm_squared())
            .sum()
    };

    let mut best = (x, y, weighted_cost(&x, &y));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        let mut h = SMatrix::<f64, 12, 12>::zeros();
        let mut g = SVector::<f64, 12>::zeros();
        let y_inv = y.inverse();
        for p in pairs {
            let e = y_inv * p.t_wm * x * p.t_ig;
            let r = e.log();
            let jl = jr_inv(&r);
            let mut j = SMatrix::<f64, 6, 12>::zeros();
            j.fixed_view_mut::<6, 6>(0, 0).copy_from(&(jl * p.t_ig.inverse().adjoint()));
            j.fixed_view_mut::<6, 6>(0, 6).copy_from(&(-jl * e.inverse().adjoint()));
            for row in 0..6 {
                j.row_mut(row).scale_mut(w[row]);
            }
            let rw = r.component_mul(&w);
            h += j.transpose() * j;
            g += j.transpose() * rw;
        }
        let step = h.cholesky().ok_or(HandEyeError::Singular)?.solve(&(-g));
        let dx: Vector6<f64> = step.fixed_rows::<6>(0).into();
        let dy: Vector6<f64> = step.fixed_rows::<6>(6).into();
        x = x * RigidMotion::exp(&dx);
        y = y * RigidMotion::exp(&dy);
        let cost = weighted_cost(&x, &y);
        if cost <= best.2 {
            best = (x, y, cost);
        }
        if step.norm() < options.step_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("hand-eye stopped after {iterations} iterations without converging");
    }
    let (t_mi, t_wg, _) = best;
    Ok(HandEyeSolution {
        rms_residual: rms_residual(pairs, &t_mi, &t_wg),
        t_mi,
        t_wg,
        iterations,
        converged,
    })
}

/// `T_WI = T_WM * T_MI` at every MoCap stamp.
pub fn convert_mocap_to_gt(mocap: &Trajectory, t_mi: &RigidMotion) -> Trajectory {
    mocap.map_poses(mocap.parent(), Frame::I, |p| *p * *t_mi)
}
