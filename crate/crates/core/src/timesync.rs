//! MoCap-to-IMU clock offset from angular-rate magnitudes: median filtering of
//! marker positions, arrival-time coarse alignment, grid search and parabola
//! refinement.
//!
//! Offsets follow `offset = mocap_time - imu_time`: an IMU sample stamped `t`
//! corresponds to the MoCap stamp `t + offset`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{PoseSample, RigidMotion, Timestamp, Trajectory};
use crate::imucal::{interpolate_imu, ImuSample};

pub const DEFAULT_STEP_NS: i64 = 100_000;
pub const DEFAULT_HALF_WINDOW_NS: i64 = 500_000_000;
pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
pub const DEFAULT_RATE_STRIDE: usize = 1;
pub const DEFAULT_VECTOR_HALF_WINDOW_NS: i64 = 2_000_000;
/// Below this peak MoCap rate (rad/s) there is nothing to align.
pub const MIN_PEAK_RATE: f64 = 0.05;
pub const MIN_OVERLAP_NS: i64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeSyncError {
    #[error("median window must be odd and at least 3, got {0}")]
    BadWindow(usize),
    #[error("{0} stream is empty")]
    EmptyStream(&'static str),
    #[error("streams overlap for only {overlap_ns} ns across the search window")]
    NoOverlap { overlap_ns: i64 },
    #[error("peak MoCap angular rate {peak} rad/s is below {MIN_PEAK_RATE} rad/s")]
    NoSignal { peak: f64 },
    #[error("cost minimum at grid index {index} of {len}; widen the window")]
    BoundaryMinimum { index: usize, len: usize },
    #[error("invalid grid: step {step_ns} ns, half window {half_window_ns} ns")]
    BadGrid { step_ns: i64, half_window_ns: i64 },
}

type Result<T> = std::result::Result<T, TimeSyncError>;

/// Scalar signal on strictly increasing nanosecond stamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateSeries {
    pub t: Vec<i64>,
    pub value: Vec<f64>,
}

impl RateSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Linear interpolation; `None` outside the sampled span.
    pub fn at(&self, t: f64) -> Option<f64> {
        let n = self.t.len();
        if n == 0 || t < self.t[0] as f64 || t > self.t[n - 1] as f64 {
            return None;
        }
        if n == 1 {
            return Some(self.value[0]);
        }
        let i = self.t.partition_point(|&s| (s as f64) <= t).clamp(1, n - 1);
        let (t0, t1) = (self.t[i - 1] as f64, self.t[i] as f64);
        let s = (t - t0) / (t1 - t0);
        Some(self.value[i - 1] + s * (self.value[i] - self.value[i - 1]))
    }
}

pub fn gyro_magnitudes(imu: &[ImuSample]) -> RateSeries {
    RateSeries {
        t: imu.iter().map(|s| s.t.0).collect(),
        value: imu.iter().map(|s| s.gyro.norm()).collect(),
    }
}

/// Central-difference body rates of the trajectory, as magnitudes.
pub fn mocap_magnitudes(mocap: &Trajectory) -> RateSeries {
    let rates = mocap.angular_rates();
    RateSeries {
        t: rates.iter().map(|(t, _)| t.0).collect(),
        value: rates.iter().map(|(_, w)| w.norm()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetEstimate {
    /// `offset_exact_ns` rounded to the nearest nanosecond.
    pub offset_ns: i64,
    pub offset_exact_ns: f64,
    /// Discrete grid minimum.
    pub grid_offset_ns: i64,
    pub cost_curve: Vec<(i64, f64)>,
    /// Rotation-aligned vector cost around the magnitude result, when enabled.
    pub vector_cost_curve: Vec<(i64, f64)>,
    pub refined: bool,
    /// `(imu stamp, |gyro|, |mocap rate| at the aligned time)` after alignment.
    pub aligned_rates: Vec<(Timestamp, f64, f64)>,
}

impl OffsetEstimate {
    fn argmin(&self) -> usize {
        argmin(&self.cost_curve)
    }
}

fn argmin(curve: &[(i64, f64)]) -> usize {
    curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    buf[buf.len() / 2]
}

/// MoCap rate magnitudes from `log(R_{i-k}^T R_{i+k}) / (t_{i+k} - t_{i-k})`.
///
/// Stencils spanning a gap (width over 1.5x the nominal `2k` spacings) are
/// skipped. `stride = 1` equals [`mocap_magnitudes`].
pub fn mocap_magnitudes_strided(mocap: &Trajectory, stride: usize) -> RateSeries {
    let k = stride.max(1);
    let s = mocap.samples();
    let Some(spacing) = median_spacing_ns(mocap.timestamps().map(|t| t.0)) else {
        return RateSeries::default();
    };
    let limit = 1.5 * (2 * k) as f64 * spacing as f64;
    let mut out = RateSeries::default();
    for i in k..s.len().saturating_sub(k) {
        let dt = s[i + k].t.0 - s[i - k].t.0;
        if k > 1 && dt as f64 > limit {
            continue;
        }
        let r = s[i - k].pose.rotation().inverse() * s[i + k].pose.rotation();
        out.t.push(s[i].t.0);
        out.value.push(crate::geometry::so3_log(&r).norm() / (dt as f64 * 1e-9));
    }
    out
}

/// Magnitude of the gyro vector averaged over `[t - half_window, t + half_window]`
/// (exact integral of the linear interpolant), at every IMU stamp whose
/// window lies inside the stream. This mirrors what a wide central
/// difference of orientations measures.
pub fn gyro_magnitudes_smoothed(imu: &[ImuSample], half_window_ns: i64) -> RateSeries {
    if half_window_ns <= 0 || imu.len() < 2 {
        return gyro_magnitudes(imu);
    }
    let t: Vec<i64> = imu.iter().map(|s| s.t.0).collect();
    let mut prefix = vec![Vector3::zeros(); imu.len()];
    for i in 1..imu.len() {
        let h = (t[i] - t[i - 1]) as f64 * 1e-9;
        prefix[i] = prefix[i - 1] + (imu[i - 1].gyro + imu[i].gyro) * (0.5 * h);
    }
    // integral from t[0] to x, x inside the span
    let integral = |x: i64| {
        let j = t.partition_point(|&s| s <= x).clamp(1, t.len() - 1);
        let (t0, t1) = (t[j - 1], t[j]);
        let u = (x - t0) as f64 / (t1 - t0) as f64;
        let g0 = imu[j - 1].gyro;
        let g1 = imu[j].gyro;
        let h = (x - t0) as f64 * 1e-9;
        prefix[j - 1] + (g0 + (g0 + (g1 - g0) * u)) * (0.5 * h)
    };
    let (lo, hi) = (t[0] + half_window_ns, t[t.len() - 1] - half_window_ns);
    let mut out = RateSeries::default();
    for &x in t.iter().filter(|&&x| x >= lo && x <= hi) {
        let mean = (integral(x + half_window_ns) - integral(x - half_window_ns)) / (2.0 * half_window_ns as f64 * 1e-9);
        out.t.push(x);
        out.value.push(mean.norm());
    }
    out
}

fn median_spacing_ns(stamps: impl Iterator<Item = i64>) -> Option<i64> {
    let stamps: Vec<i64> = stamps.collect();
    let mut d: Vec<i64> = stamps.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_unstable();
    Some(d[d.len() / 2])
}

/// Windowed median of each position component; near the ends the window
/// shrinks symmetrically so it stays centred.
pub fn median_filter_positions(traj: &Trajectory, window: usize) -> Result<Trajectory> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(TimeSyncError::BadWindow(window));
    }
    let s = traj.samples();
    let n = s.len();
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    let samples = (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let mut p = Vector3::zeros();
            for axis in 0..3 {
                buf.clear();
                buf.extend(s[i - h..=i + h].iter().map(|x| x.pose.translation()[axis]));
                p[axis] = median(&mut buf);
            }
            PoseSample::new(s[i].t, RigidMotion::new(*s[i].pose.rotation(), p))
        })
        .collect();
    Ok(Trajectory::new(traj.parent(), traj.child(), samples).expect("timestamps unchanged"))
}

/// Difference of first arrival stamps, `mocap.first - imu.first`.
pub fn coarse_align(imu: &[ImuSample], mocap: &Trajectory) -> Result<i64> {
    let i0 = imu.first().ok_or(TimeSyncError::EmptyStream("IMU"))?.t;
    let m0 = mocap.first_time().ok_or(TimeSyncError::EmptyStream("MoCap"))?;
    Ok(m0.0 - i0.0)
}

/// Evaluates `cost(d) = mean (|w_imu(t - d)| - |w_mocap(t)|)^2` on the grid
/// `center + k * step`, `|k| <= half_window / step`, where `t` runs over
/// MoCap stamps.
///
/// The gyro magnitudes are the ones interpolated: they are far less noisy
/// than finite-differenced MoCap rates, and interpolating a noisy series adds
/// a variance term that depends on the sub-sample phase of `d` and drags the
/// minimum. The mean runs over the MoCap stamps that map inside the IMU span
/// for every candidate, so all grid points average the same samples.
pub fn grid_search_offset(
    gyro_mag: &RateSeries,
    mocap_mag: &RateSeries,
    center_ns: i64,
    half_window_ns: i64,
    step_ns: i64,
) -> Result<OffsetEstimate> {
    if step_ns <= 0 || half_window_ns < step_ns {
        return Err(TimeSyncError::BadGrid { step_ns, half_window_ns });
    }
    if gyro_mag.len() < 2 {
        return Err(TimeSyncError::EmptyStream("IMU"));
    }
    if mocap_mag.len() < 2 {
        return Err(TimeSyncError::EmptyStream("MoCap"));
    }
    let peak = mocap_mag.value.iter().cloned().fold(0.0, f64::max);
    if !(peak >= MIN_PEAK_RATE) {
        return Err(TimeSyncError::NoSignal { peak });
    }
    let k = half_window_ns / step_ns;
    let lo_off = center_ns - k * step_ns;
    let hi_off = center_ns + k * step_ns;
    let (g0, g1) = (gyro_mag.t[0], *gyro_mag.t.last().unwrap());
    // t - d inside [g0, g1] for every d in [lo_off, hi_off]
    let first = mocap_mag.t.partition_point(|&t| t - hi_off < g0);
    let last = mocap_mag.t.partition_point(|&t| t - lo_off <= g1);
    let overlap_ns = if last > first {
        mocap_mag.t[last - 1] - mocap_mag.t[first]
    } else {
        0
    };
    if overlap_ns < MIN_OVERLAP_NS {
        return Err(TimeSyncError::NoOverlap { overlap_ns });
    }
    let ts = &mocap_mag.t[first..last];
    let vs = &mocap_mag.value[first..last];

    let cost_curve: Vec<(i64, f64)> = (-k..=k)
        .into_par_iter()
        .map(|j| {
            let d = center_ns + j * step_ns;
            (d, cost_at(ts, vs, gyro_mag, d))
        })
        .collect();
    let i = argmin(&cost_curve);
    let d = cost_curve[i].0;
    Ok(OffsetEstimate {
        offset_ns: d,
        offset_exact_ns: d as f64,
        grid_offset_ns: d,
        aligned_rates: aligned(gyro_mag, mocap_mag, d as f64),
        cost_curve,
        vector_cost_curve: Vec::new(),
        refined: false,
    })
}

/// Mean squared magnitude difference; every `t - offset` must fall inside
/// the gyro span.
fn cost_at(ts: &[i64], vs: &[f64], gyro: &RateSeries, offset_ns: i64) -> f64 {
    let mut j = 1;
    let mut sum = 0.0;
    for (&t, &v) in ts.iter().zip(vs) {
        let tg = t - offset_ns;
        while j + 1 < gyro.t.len() && gyro.t[j] < tg {
            j += 1;
        }
        let (t0, t1) = (gyro.t[j - 1], gyro.t[j]);
        let s = (tg - t0) as f64 / (t1 - t0) as f64;
        let g = gyro.value[j - 1] + s * (gyro.value[j] - gyro.value[j - 1]);
        sum += (g - v).powi(2);
    }
    sum / ts.len() as f64
}

fn aligned(gyro: &RateSeries, mocap: &RateSeries, offset_ns: f64) -> Vec<(Timestamp, f64, f64)> {
    gyro.t
        .iter()
        .zip(&gyro.value)
        .filter_map(|(&t, &v)| mocap.at(t as f64 + offset_ns).map(|m| (Timestamp(t), v, m)))
        .collect()
}

/// Vertex of the parabola through the grid minimum and its two neighbours.
///
/// Grid spacing is taken from the neighbours; the returned offset stays within
/// one step of the discrete minimum.
pub fn refine_parabola(cost_curve: &[(i64, f64)], argmin_index: usize) -> Result<f64> {
    let len = cost_curve.len();
    if argmin_index == 0 || argmin_index + 1 >= len {
        return Err(TimeSyncError::BoundaryMinimum { index: argmin_index, len });
    }
    let (x0, c0) = cost_curve[argmin_index - 1];
    let (x1, c1) = cost_curve[argmin_index];
    let (x2, c2) = cost_curve[argmin_index + 1];
    let step = 0.5 * (x2 - x0) as f64;
    let curvature = c0 - 2.0 * c1 + c2;
    if !(curvature > 0.0) {
        return Ok(x1 as f64);
    }
    let shift = (step * (c0 - c2) / (2.0 * curvature)).clamp(-step, step);
    Ok(x1 as f64 + shift)
}

/// Rotation-aligned vector cost around `center_ns`:
/// `cost(d) = min_R mean |w_imu(t - d) - R w_mocap(t)|^2` over MoCap stamps
/// `t`, with `R` from an SVD (Kabsch) per candidate and the gyro vector
/// interpolated cubically. Returns the grid curve; the caller refines its
/// minimum like the magnitude curve.
pub fn vector_cost_curve(
    imu: &[ImuSample],
    mocap: &Trajectory,
    center_ns: i64,
    half_window_ns: i64,
    step_ns: i64,
) -> Result<Vec<(i64, f64)>> {
    if step_ns <= 0 || half_window_ns < step_ns {
        return Err(TimeSyncError::BadGrid { step_ns, half_window_ns });
    }
    if imu.len() < 4 {
        return Err(TimeSyncError::EmptyStream("IMU"));
    }
    let rates = mocap.angular_rates();
    let k = half_window_ns / step_ns;
    let lo_off = center_ns - k * step_ns;
    let hi_off = center_ns + k * step_ns;
    // two IMU samples of margin for the cubic stencil
    let (g0, g1) = (imu[1].t.0, imu[imu.len() - 2].t.0);
    let used: Vec<&(Timestamp, Vector3<f64>)> = rates
        .iter()
        .filter(|(t, _)| t.0 - hi_off > g0 && t.0 - lo_off < g1)
        .collect();
    let overlap_ns = match (used.first(), used.last()) {
        (Some(a), Some(b)) => b.0 .0 - a.0 .0,
        _ => 0,
    };
    if overlap_ns < MIN_OVERLAP_NS {
        return Err(TimeSyncError::NoOverlap { overlap_ns });
    }
    let n = used.len() as f64;
    let mocap_energy: f64 = used.iter().map(|(_, w)| w.norm_squared()).sum::<f64>() / n;
    Ok((-k..=k)
        .into_par_iter()
        .map(|j| {
            let d = center_ns + j * step_ns;
            let mut h = Matrix3::zeros();
            let mut gyro_energy = 0.0;
            for (t, w) in &used {
                let (g, _) = interpolate_imu(imu, Timestamp(t.0 - d)).expect("inside the IMU span");
                h += g * w.transpose();
                gyro_energy += g.norm_squared();
            }
            // max over rotations of tr(R^T H) is the sum of singular values,
            // with the smallest one negated for a reflection
            let svd = h.svd(true, true);
            let det = (svd.u.unwrap() * svd.v_t.unwrap()).determinant();
            let sv = svd.singular_values;
            let (imin, _) = sv.argmin();
            let best: f64 = (0..3).map(|i| if i == imin && det < 0.0 { -sv[i] } else { sv[i] }).sum();
            (d, gyro_energy / n + mocap_energy - 2.0 * best / n)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSyncOptions {
    pub step_ns: i64,
    pub half_window_ns: i64,
    pub median_window: usize,
    /// MoCap samples on each side of the rate stencil; above 1 the gyro is
    /// averaged over the matching window.
    pub rate_stride: usize,
    /// Half-width of the rotation-aligned vector refinement around the
    /// magnitude result; 0 disables it.
    pub vector_half_window_ns: i64,
}

impl Default for TimeSyncOptions {
    fn default() -> Self {
        Self {
            step_ns: DEFAULT_STEP_NS,
            half_window_ns: DEFAULT_HALF_WINDOW_NS,
            median_window: DEFAULT_MEDIAN_WINDOW,
            rate_stride: DEFAULT_RATE_STRIDE,
            vector_half_window_ns: DEFAULT_VECTOR_HALF_WINDOW_NS,
        }
    }
}

/// Median filter, MoCap rates, coarse guess, grid search, parabola vertex.
pub fn time_align(imu: &[ImuSample], mocap: &Trajectory, options: &TimeSyncOptions) -> Result<OffsetEstimate> {
    let center = coarse_align(imu, mocap)?;
    let filtered = median_filter_positions(mocap, options.median_window)?;
    let (gyro, rates) = if options.rate_stride > 1 {
        let spacing = median_spacing_ns(filtered.timestamps().map(|t| t.0)).unwrap_or(0);
        (
            gyro_magnitudes_smoothed(imu, options.rate_stride as i64 * spacing),
            mocap_magnitudes_strided(&filtered, options.rate_stride),
        )
    } else {
        (gyro_magnitudes(imu), mocap_magnitudes(&filtered))
    };
    let mut est = grid_search_offset(&gyro, &rates, center, options.half_window_ns, options.step_ns)?;
    let mut exact = refine_parabola(&est.cost_curve, est.argmin())?;
    if options.vector_half_window_ns > 0 {
        let curve = vector_cost_curve(
            imu,
            &filtered,
            exact.round() as i64,
            options.vector_half_window_ns,
            options.step_ns,
        )?;
        exact = refine_parabola(&curve, argmin(&curve))?;
        est.vector_cost_curve = curve;
    }
    est.offset_exact_ns = exact;
    est.offset_ns = exact.round() as i64;
    est.refined = true;
    est.aligned_rates = aligned(&gyro, &rates, exact);
    Ok(est)
}
