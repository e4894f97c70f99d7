//! Overlapping Allan deviation and white-noise / bias random-walk fits.
//!
//! For cluster size `n` the estimator averages `(mean_{k+n} - mean_k)^2 / 2`
//! over all `M - 2n + 1` start indices `k`. Cluster means come from a prefix
//! sum, so each cluster size costs `O(M)`.

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllanError {
    #[error("cluster size {n} needs at least {needed} samples, got {got}")]
    InsufficientData { n: usize, needed: usize, got: usize },
    #[error("cluster size must be at least 1")]
    ZeroCluster,
    #[error("fewer than two usable curve points in tau range [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("sample period must be positive, got {0}")]
    BadPeriod(f64),
}

/// Allan deviation of one scalar channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AllanCurve {
    /// Integration times `n * tau0`, seconds, strictly increasing.
    pub tau: Vec<f64>,
    pub dev: Vec<f64>,
    /// Number of averaged squared differences per point.
    pub counts: Vec<usize>,
}

impl AllanCurve {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    fn points_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.tau
            .iter()
            .zip(&self.dev)
            .filter(move |(t, d)| **t >= lo && **t <= hi && **d > 0.0)
            .map(|(t, d)| (*t, *d))
    }
}

/// Per-axis curves of a 3-axis sensor plus their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisCurves {
    pub axes: [AllanCurve; 3],
    /// Deviation averaged over the three axes at each tau.
    pub mean: AllanCurve,
}

impl AxisCurves {
    /// Curve whose deviation is the average of the selected axes.
    pub fn average_of(&self, axes: &[usize]) -> AllanCurve {
        let first = &self.axes[0];
        let dev = (0..first.len())
            .map(|i| axes.iter().map(|&a| self.axes[a].dev[i]).sum::<f64>() / axes.len() as f64)
            .collect();
        AllanCurve {
            tau: first.tau.clone(),
            dev,
            counts: first.counts.clone(),
        }
    }
}

/// White-noise density and bias random-walk density of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// unit / sqrt(Hz)
    pub sigma_w: f64,
    /// unit / s / sqrt(Hz)
    pub sigma_b: f64,
    pub white_range: (f64, f64),
    pub rw_range: (f64, f64),
}

/// Fit region for the -1/2 slope, seconds.
pub const DEFAULT_WHITE_RANGE: (f64, f64) = (0.02, 1.0);
/// Fit region for the +1/2 slope, seconds.
pub const DEFAULT_RW_RANGE: (f64, f64) = (1000.0, 6000.0);

/// Log-spaced cluster sizes from 1 to `m / 3`, about `per_decade` per decade.
pub fn default_cluster_sizes(m: usize, per_decade: usize) -> Vec<usize> {
    let max = m / 3;
    if max == 0 {
        return Vec::new();
    }
    let decades = (max as f64).log10();
    let steps = (decades * per_decade as f64).ceil() as usize;
    let mut sizes: Vec<usize> = (0..=steps)
        .map(|i| {
            let n = 10f64.powf(decades * i as f64 / steps.max(1) as f64).round() as usize;
            n.clamp(1, max)
        })
        .collect();
    sizes.dedup();
    sizes
}

/// Prefix sums of the mean-removed series; `out[k] = sum_{j<k} (g_j - mu)`.
fn prefix_sums(samples: &[f64]) -> Vec<f64> {
    let mu = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
    let mut out = Vec::with_capacity(samples.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for g in samples {
        acc += g - mu;
        out.push(acc);
    }
    out
}

fn variance_from_prefix(prefix: &[f64], n: usize) -> f64 {
    let m = prefix.len() - 1;
    let count = m - 2 * n + 1;
    let mut sum = 0.0;
    for k in 0..count {
        let d = prefix[k + 2 * n] - 2.0 * prefix[k + n] + prefix[k];
        sum += d * d;
    }
    sum / (n as f64 * n as f64) / (2.0 * count as f64)
}

fn check_sizes(m: usize, tau0: f64, cluster_sizes: &[usize]) -> Result<Vec<usize>, AllanError> {
    if !(tau0 > 0.0) {
        return Err(AllanError::BadPeriod(tau0));
    }
    let mut sizes = cluster_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    for &n in &sizes {
        if n == 0 {
            return Err(AllanError::ZeroCluster);
        }
        if m < 2 * n + 1 {
            return Err(AllanError::InsufficientData {
                n,
                needed: 2 * n + 1,
                got: m,
            });
        }
    }
    Ok(sizes)
}

/// Overlapping Allan deviation of a scalar series sampled every `tau0` seconds.
pub fn allan_deviation(samples: &[f64], tau0: f64, cluster_sizes: &[usize]) -> Result<AllanCurve, AllanError> {
    let sizes = check_sizes(samples.len(), tau0, cluster_sizes)?;
    let prefix = prefix_sums(samples);
    let dev: Vec<f64> = sizes
        .par_iter()
        .map(|&n| variance_from_prefix(&prefix, n).sqrt())
        .collect();
    Ok(AllanCurve {
        tau: sizes.iter().map(|&n| n as f64 * tau0).collect(),
        dev,
        counts: sizes.iter().map(|&n| samples.len() - 2 * n + 1).collect(),
    })
}

/// Runs [`allan_deviation`] on each axis of a 3-vector series.
pub fn allan_deviation_axes(
    samples: &[Vector3<f64>],
    tau0: f64,
    cluster_sizes: &[usize],
) -> Result<AxisCurves, AllanError> {
    let axis = |a: usize| -> Result<AllanCurve, AllanError> {
        let series: Vec<f64> = samples.iter().map(|v| v[a]).collect();
        allan_deviation(&series, tau0, cluster_sizes)
    };
    let axes = [axis(0)?, axis(1)?, axis(2)?];
    let mut curves = AxisCurves {
        mean: axes[0].clone(),
        axes,
    };
    curves.mean = curves.average_of(&[0, 1, 2]);
    Ok(curves)
}

/// Exact Allan variance of a discrete random walk with per-step std
/// `sigma_b_step` at cluster size `n`.
pub fn allan_rw_closed_form(n: usize, sigma_b_step: f64) -> f64 {
    let n = n as f64;
    sigma_b_step * sigma_b_step * (1.0 / (6.0 * n) + n / 3.0)
}

/// Least-squares offset of a fixed-slope line in log-log space, returned as the
/// line's value at `tau_eval`.
fn fixed_slope_fit(curve: &AllanCurve, range: (f64, f64), slope: f64, tau_eval: f64) -> Result<f64, AllanError> {
    let (lo, hi) = range;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (tau, dev) in curve.points_in(lo, hi) {
        sum += dev.ln() - slope * (tau / tau_eval).ln();
        count += 1;
    }
    if count < 2 {
        return Err(AllanError::EmptyRange { lo, hi });
    }
    Ok((sum / count as f64).exp())
}

/// `sigma_w`: the slope -1/2 line evaluated at tau = 1 s.
pub fn fit_white_noise(curve: &AllanCurve, tau_range: (f64, f64)) -> Result<f64, AllanError> {
    fixed_slope_fit(curve, tau_range, -0.5, 1.0)
}

/// `sigma_b`: the slope +1/2 line evaluated at tau = 3 s.
pub fn fit_bias_rw(curve: &AllanCurve, tau_range: (f64, f64)) -> Result<f64, AllanError> {
    fixed_slope_fit(curve, tau_range, 0.5, 3.0)
}

/// Free-slope regression of log dev on log tau over a range.
pub fn loglog_slope(curve: &AllanCurve, tau_range: (f64, f64)) -> Result<f64, AllanError> {
    let (lo, hi) = tau_range;
    let pts: Vec<(f64, f64)> = curve.points_in(lo, hi).map(|(t, d)| (t.ln(), d.ln())).collect();
    if pts.len() < 2 {
        return Err(AllanError::EmptyRange { lo, hi });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Fits both noise terms on one curve.
pub fn fit_noise_params(
    white_curve: &AllanCurve,
    rw_curve: &AllanCurve,
    white_range: (f64, f64),
    rw_range: (f64, f64),
) -> Result<NoiseParams, AllanError> {
    Ok(NoiseParams {
        sigma_w: fit_white_noise(white_curve, white_range)?,
        sigma_b: fit_bias_rw(rw_curve, rw_range)?,
        white_range,
        rw_range,
    })
}
