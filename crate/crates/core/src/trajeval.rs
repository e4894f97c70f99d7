//! Trajectory error metrics against ground truth: SE(3)-aligned absolute
//! trajectory error, relative pose error over a time interval, ground-truth
//! segmentation and divergence classification.

use std::ops::Range;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::{interpolate_poses, rotation_angle, RigidMotion, Timestamp, Trajectory};

pub const DEFAULT_GAP_S: f64 = 0.5;
pub const DEFAULT_MAX_GAP_S: f64 = 0.05;
pub const DEFAULT_DELTA_S: f64 = 1.0;
/// End-segment ATE above this (strictly) marks a run as diverged.
pub const DIVERGENCE_THRESHOLD_M: f64 = 2.0;
/// End segment length when ground truth covers the whole run.
pub const FULL_COVERAGE_END_S: f64 = 10.0;
/// Allowed mismatch between `t_i + delta` and the paired pose, as a fraction of delta.
const RPE_TIME_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no estimate pose falls inside a ground-truth segment")]
    EmptyAssociation,
    #[error("alignment needs at least 3 non-collinear points ({0})")]
    DegenerateGeometry(String),
    #[error("no pose pairs {delta_s} s apart within a segment")]
    NoPairs { delta_s: f64 },
    #[error("empty ground-truth trajectory")]
    EmptyGroundTruth,
}

type Result<T> = std::result::Result<T, EvalError>;

/// Contiguous run of ground-truth samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub range: Range<usize>,
    pub first: Timestamp,
    pub last: Timestamp,
}

/// Splits wherever consecutive stamps are more than `gap_threshold_s` apart.
pub fn split_segments(gt: &Trajectory, gap_threshold_s: f64) -> Vec<Segment> {
    let s = gt.samples();
    if s.is_empty() {
        return Vec::new();
    }
    let gap = (gap_threshold_s * 1e9).round() as i64;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=s.len() {
        if i == s.len() || s[i].t.0 - s[i - 1].t.0 > gap {
            out.push(Segment {
                range: start..i,
                first: s[start].t,
                last: s[i - 1].t,
            });
            start = i;
        }
    }
    out
}

/// Estimate poses paired with interpolated ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociatedTrack {
    pub t: Vec<Timestamp>,
    pub gt: Vec<RigidMotion>,
    pub est: Vec<RigidMotion>,
    /// Index into the segment list the pair came from.
    pub segment: Vec<usize>,
}

impl AssociatedTrack {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Pairs whose indices satisfy `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> AssociatedTrack {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        AssociatedTrack {
            t: idx.iter().map(|&i| self.t[i]).collect(),
            gt: idx.iter().map(|&i| self.gt[i]).collect(),
            est: idx.iter().map(|&i| self.est[i]).collect(),
            segment: idx.iter().map(|&i| self.segment[i]).collect(),
        }
    }

    fn segment_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.segment[i] != self.segment[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }
}

/// Pairs every estimate stamp inside a segment with ground truth interpolated
/// to that stamp, provided both bracketing samples lie within `max_gap_s`.
pub fn associate(
    gt: &Trajectory,
    segments: &[Segment],
    est: &Trajectory,
    max_gap_s: f64,
) -> Result<AssociatedTrack> {
    let s = gt.samples();
    let max_gap = (max_gap_s * 1e9).round() as i64;
    let mut track = AssociatedTrack::default();
    for e in est.samples() {
        let Some(k) = segments.iter().position(|g| g.first <= e.t && e.t <= g.last) else {
            continue;
        };
        let range = &segments[k].range;
        let seg = &s[range.clone()];
        let i = seg.partition_point(|x| x.t <= e.t);
        let pose = if i > 0 && seg[i - 1].t == e.t {
            seg[i - 1].pose
        } else {
            let (a, b) = (&seg[i - 1], &seg[i]);
            if e.t.0 - a.t.0 > max_gap || b.t.0 - e.t.0 > max_gap {
                continue;
            }
            let u = (e.t.0 - a.t.0) as f64 / (b.t.0 - a.t.0) as f64;
            interpolate_poses(&a.pose, &b.pose, u)
        };
        track.t.push(e.t);
        track.gt.push(pose);
        track.est.push(e.pose);
        track.segment.push(k);
    }
    if track.is_empty() {
        return Err(EvalError::EmptyAssociation);
    }
    Ok(track)
}

/// Rigid `T` minimizing `sum |T p_i - q_i|^2` (no scale), by SVD of the
/// cross-covariance with a reflection guard.
pub fn align_se3(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<RigidMotion> {
    if p.len() != q.len() {
        return Err(EvalError::DegenerateGeometry(format!("{} vs {} points", p.len(), q.len())));
    }
    if p.len() < 3 {
        return Err(EvalError::DegenerateGeometry(format!("{} points", p.len())));
    }
    let n = p.len() as f64;
    let cp = p.iter().sum::<Vector3<f64>>() / n;
    let cq = q.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        let (da, db) = (a - cp, b - cq);
        cov += db * da.transpose();
        scatter += da * da.transpose();
    }
    let sv = scatter.symmetric_eigen().eigenvalues;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(f64::total_cmp);
    if !(sorted[2] > 0.0) || sorted[1] <= 1e-12 * sorted[2] {
        return Err(EvalError::DegenerateGeometry("points are collinear or coincident".into()));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
    let t = cq - rot * cp;
    Ok(RigidMotion::new(rot, t))
}

fn positions(poses: &[RigidMotion]) -> Vec<Vector3<f64>> {
    poses.iter().map(|p| *p.translation()).collect()
}

/// RMS position residual after aligning the estimate onto ground truth.
pub fn ate(track: &AssociatedTrack) -> Result<f64> {
    ate_with_alignment(track).map(|(r, _)| r)
}

pub fn ate_with_alignment(track: &AssociatedTrack) -> Result<(f64, RigidMotion)> {
    let p = positions(&track.est);
    let q = positions(&track.gt);
    let t = align_se3(&p, &q)?;
    let ss: f64 = p.iter().zip(&q).map(|(a, b)| (t.transform_point(a) - b).norm_squared()).sum();
    Ok(((ss / p.len() as f64).sqrt(), t))
}

/// Translational (m) and rotational (deg) RMS of
/// `E_i = (G_i^-1 G_j)^-1 (P_i^-1 P_j)` where `t_j` is the stamp closest to
/// `t_i + delta` in the same segment. Poses within `delta` of the segment end
/// are not used as starting points.
pub fn rpe(track: &AssociatedTrack, delta_s: f64) -> Result<(f64, f64)> {
    let delta = delta_s * 1e9;
    let tol = RPE_TIME_TOLERANCE * delta;
    let mut trans = 0.0;
    let mut rot = 0.0;
    let mut count = 0usize;
    for range in track.segment_ranges() {
        let ts = &track.t[range.clone()];
        for i in 0..ts.len() {
            let target = ts[i].0 as f64 + delta;
            // the last delta of every segment has no partner
            if target > ts[ts.len() - 1].0 as f64 {
                break;
            }
            let k = ts.partition_point(|t| (t.0 as f64) < target);
            let j = [k.wrapping_sub(1), k]
                .into_iter()
                .filter(|&j| j < ts.len() && j > i)
                .min_by(|&a, &b| {
                    (ts[a].0 as f64 - target).abs().total_cmp(&(ts[b].0 as f64 - target).abs())
                });
            let Some(j) = j else { continue };
            if (ts[j].0 as f64 - target).abs() > tol {
                continue;
            }
            let (a, b) = (range.start + i, range.start + j);
            let g = track.gt[a].inverse() * track.gt[b];
            let p = track.est[a].inverse() * track.est[b];
            let e = g.inverse() * p;
            trans += e.translation().norm_squared();
            rot += rotation_angle(e.rotation()).to_degrees().powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::NoPairs { delta_s });
    }
    Ok(((trans / count as f64).sqrt(), (rot / count as f64).sqrt()))
}

pub fn is_diverged(end_segment_ate_m: f64) -> bool {
    end_segment_ate_m > DIVERGENCE_THRESHOLD_M
}

/// Pairs of the end segment: the last GT segment when there are several,
/// otherwise the final `FULL_COVERAGE_END_S` seconds of ground truth.
pub fn end_segment(track: &AssociatedTrack, segments: &[Segment]) -> AssociatedTrack {
    match segments {
        [] => AssociatedTrack::default(),
        [only] => {
            let from = only.last.0 - (FULL_COVERAGE_END_S * 1e9) as i64;
            track.filter(|i| track.t[i].0 >= from)
        }
        _ => {
            let last = segments.len() - 1;
            track.filter(|i| track.segment[i] == last)
        }
    }
}

/// End-segment ATE with its own alignment, and whether it exceeds the threshold.
pub fn classify_divergence(track: &AssociatedTrack, segments: &[Segment]) -> Result<(bool, f64)> {
    let a = ate(&end_segment(track, segments))?;
    Ok((is_diverged(a), a))
}

/// Sum of consecutive ground-truth translation differences.
pub fn trajectory_length(gt: &Trajectory) -> f64 {
    gt.samples()
        .windows(2)
        .map(|w| (w[1].pose.translation() - w[0].pose.translation()).norm())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub gap_threshold_s: f64,
    pub max_gap_s: f64,
    pub delta_s: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            gap_threshold_s: DEFAULT_GAP_S,
            max_gap_s: DEFAULT_MAX_GAP_S,
            delta_s: DEFAULT_DELTA_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ate_m: f64,
    /// `None` when no pose pair is `delta_s` apart.
    pub rpe_trans_m: Option<f64>,
    pub rpe_rot_deg: Option<f64>,
    pub delta_s: f64,
    /// Per-segment ATE with per-segment alignment; `None` if too few pairs.
    pub segment_ates: Vec<Option<f64>>,
    pub end_segment_ate_m: Option<f64>,
    pub diverged: bool,
    pub length_m: f64,
    pub pairs: usize,
    pub segments: usize,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_lines(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        let mut out = vec![
            format!("ate_m={:.6}", self.ate_m),
            format!("rpe_trans_m={}", opt(self.rpe_trans_m)),
            format!("rpe_rot_deg={}", opt(self.rpe_rot_deg)),
            format!("delta_s={}", self.delta_s),
            format!("segments={}", self.segments),
        ];
        for (i, a) in self.segment_ates.iter().enumerate() {
            out.push(format!("segment_{i}_ate_m={}", opt(*a)));
        }
        out.push(format!("end_segment_ate_m={}", opt(self.end_segment_ate_m)));
        out.push(format!("diverged={}", self.diverged));
        out.push(format!("length_m={:.6}", self.length_m));
        out.push(format!("pairs={}", self.pairs));
        out
    }
}

pub fn evaluate(gt: &Trajectory, est: &Trajectory, options: &EvalOptions) -> Result<EvalReport> {
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let segments = split_segments(gt, options.gap_threshold_s);
    let track = associate(gt, &segments, est, options.max_gap_s)?;
    let ate_m = ate(&track)?;
    let (rpe_trans_m, rpe_rot_deg) = match rpe(&track, options.delta_s) {
        Ok((t, r)) => (Some(t), Some(r)),
        Err(EvalError::NoPairs { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    let segment_ates = (0..segments.len())
        .map(|k| ate(&track.filter(|i| track.segment[i] == k)).ok())
        .collect();
    let end = ate(&end_segment(&track, &segments)).ok();
    Ok(EvalReport {
        ate_m,
        rpe_trans_m,
        rpe_rot_deg,
        delta_s: options.delta_s,
        segment_ates,
        end_segment_ate_m: end,
        diverged: end.is_some_and(is_diverged),
        length_m: trajectory_length(gt),
        pairs: track.len(),
        segments: segments.len(),
    })
}
