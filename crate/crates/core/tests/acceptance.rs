//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Every tolerance is pinned below.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use vicalib::allan;
use vicalib::geometry::{rotation_angle, Frame, PoseSample, RigidMotion, Timestamp, Trajectory};
use vicalib::handeye::{self, HandEyeOptions, HandEyePair, HandEyeProblem};
use vicalib::imucal;
use vicalib::ingest::{self, CalibrationFile};
use vicalib::photometric::{self, ExposureModel, VignetteOptions};
use vicalib::synth::{self, Channel, RigConfig};
use vicalib::timesync::{self, TimeSyncOptions};
use vicalib::trajeval::{self, EvalOptions};

// 1
const WHITE_SAMPLES: usize = 10_000_000;
const WHITE_SIGMA_W: f64 = 8.0e-5;
const WHITE_RATE_HZ: f64 = 200.0;
const WHITE_FIT_RANGE: (f64, f64) = (0.02, 1.0);
const WHITE_REL_TOL: f64 = 0.05;
const WHITE_BUDGET: Duration = Duration::from_secs(30);
// 2
const RW_SAMPLES: usize = 10_000_000;
const RW_SIGMA_B: f64 = 2.2e-6;
const RW_CLUSTERS: [usize; 3] = [1, 10, 100];
const RW_REL_TOL: f64 = 0.03;
const RW_SLOPE_RANGE: (f64, f64) = (1.0, 100.0);
const RW_SLOPE_TOL: f64 = 0.05;
// 3
const SYNC_OFFSETS_NS: [i64; 3] = [-250_000_000, 0, 12_345_600];
const SYNC_TOL_NS: f64 = 10_000.0;
const SYNC_BUDGET: Duration = Duration::from_secs(5);
// 4
const HE_EXACT_TOL: f64 = 1e-9;
const HE_TRIALS: u64 = 20;
const HE_ROT_TOL_DEG: f64 = 0.1;
const HE_TRANS_TOL_M: f64 = 2e-3;
// 5
const INTR_TOL: f64 = 1e-9;
// 6
const ATE_TOL: f64 = 1e-9;
const RPE_TOL: f64 = 1e-9;
const DIVERGENCE_THRESHOLD_M: f64 = 2.0;
// 7
const VIGNETTE_TOL: f64 = 1e-6;
const EXPOSURE_K_TOL: f64 = 1e-9;
// 8
const E2E_BUDGET: Duration = Duration::from_secs(180);
const E2E_SHIFT_TOL_NS: i64 = 10_000;
const E2E_ROT_TOL_DEG: f64 = 0.1;
const E2E_TRANS_TOL_M: f64 = 2e-3;
const E2E_M_G_TOL: f64 = 2e-3;
const E2E_B_G_TOL: f64 = 1e-3;
const E2E_M_A_TOL: f64 = 3e-3;
const E2E_B_A_TOL: f64 = 5e-2;
const E2E_SIGMA_W_REL: f64 = 0.05;
const E2E_SIGMA_B_REL: f64 = 0.10;
/// Exposures are logged in whole nanoseconds.
const E2E_K_REL: f64 = 1e-6;
/// Views and vignette maps go through 16-bit PGM files: four steps.
const E2E_VIGNETTE_TOL: f64 = 4.0 / 65535.0;
// 9
const FUZZ_INPUTS_PER_PARSER: usize = 100_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn angle_deg(a: &RigidMotion, b: &RigidMotion) -> f64 {
    rotation_angle(&(a.rotation().inverse() * b.rotation())).to_degrees()
}

fn trans_err(a: &RigidMotion, b: &RigidMotion) -> f64 {
    (a.translation() - b.translation()).norm()
}

fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).abs().max()
}

// --- 1 ------------------------------------------------------------------

fn allan_white() -> Outcome {
    let start = Instant::now();
    let tau0 = 1.0 / WHITE_RATE_HZ;
    // same per-sample scaling as the simulator's white-noise channel
    let mut rng = synth::channel_rng(1, Channel::GyroWhite);
    let per_sample = WHITE_SIGMA_W / tau0.sqrt();
    let g: Vec<f64> = (0..WHITE_SAMPLES).map(|_| per_sample * normal(&mut rng)).collect();
    let sizes = allan::default_cluster_sizes(g.len(), 20);
    let curve = allan::allan_deviation(&g, tau0, &sizes).map_err(|e| e.to_string())?;
    let fitted = allan::fit_white_noise(&curve, WHITE_FIT_RANGE).map_err(|e| e.to_string())?;
    let rel = (fitted / WHITE_SIGMA_W - 1.0).abs();
    let elapsed = start.elapsed();
    check(
        rel < WHITE_REL_TOL && elapsed < WHITE_BUDGET,
        format!(
            "sigma_w={fitted:.4e} rel_err={rel:.4} (tol {WHITE_REL_TOL}) in {:.2} s (budget {} s)",
            elapsed.as_secs_f64(),
            WHITE_BUDGET.as_secs()
        ),
    )
}

// --- 2 ------------------------------------------------------------------

fn allan_random_walk() -> Outcome {
    let tau0 = 1.0 / WHITE_RATE_HZ;
    let step = RW_SIGMA_B * tau0.sqrt();
    let mut rng = synth::channel_rng(2, Channel::GyroBias);
    let mut acc = 0.0;
    let g: Vec<f64> = (0..RW_SAMPLES)
        .map(|_| {
            acc += step * normal(&mut rng);
            acc
        })
        .collect();
    let curve = allan::allan_deviation(&g, tau0, &RW_CLUSTERS).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, n) in RW_CLUSTERS.into_iter().enumerate() {
        let rel = (curve.dev[i].powi(2) / allan::allan_rw_closed_form(n, step) - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("n={n}:{rel:.4}"));
    }
    let sizes = allan::default_cluster_sizes(g.len(), 20);
    let full = allan::allan_deviation(&g, tau0, &sizes).map_err(|e| e.to_string())?;
    let slope = allan::loglog_slope(&full, RW_SLOPE_RANGE).map_err(|e| e.to_string())?;
    check(
        worst < RW_REL_TOL && (slope - 0.5).abs() < RW_SLOPE_TOL,
        format!(
            "avar rel_err {} (tol {RW_REL_TOL}); slope {slope:.4} over tau {:?} s (tol 0.5 +- {RW_SLOPE_TOL})",
            parts.join(" "),
            RW_SLOPE_RANGE
        ),
    )
}

// --- 3 ------------------------------------------------------------------

const SYNC_RIG: &str = "\
[rig]
duration_s = 60
[trajectory]
kind = random
max_frequency_hz = 3
max_translation_m = 0.3
max_rotation_deg = 60
[mocap]
sigma_rot_deg = 0.1
sigma_trans_m = 0.0005
";

fn time_sync() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (case, offset) in SYNC_OFFSETS_NS.into_iter().enumerate() {
        let mut config = RigConfig::parse(SYNC_RIG.as_bytes(), Some(30 + case as u64)).map_err(|e| e.to_string())?;
        config.mocap_offset_ns = offset;
        let gt = config.ground_truth();
        let imu = synth::sample_imu(&gt, &config).raw;
        let mocap = synth::sample_mocap(&gt, &config);
        let start = Instant::now();
        let est = timesync::time_align(&imu, &mocap, &TimeSyncOptions::default()).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let err = est.offset_exact_ns - offset as f64;
        ok &= err.abs() < SYNC_TOL_NS && elapsed < SYNC_BUDGET;
        lines.push(format!("{offset} ns: err {:.2} us in {:.2} s", err * 1e-3, elapsed.as_secs_f64()));
    }
    check(
        ok,
        format!(
            "{} (tol {} us, {} s each)",
            lines.join("; "),
            SYNC_TOL_NS * 1e-3,
            SYNC_BUDGET.as_secs()
        ),
    )
}

// --- 4 ------------------------------------------------------------------

fn rig_t_mi() -> RigidMotion {
    RigidMotion::from_wxyz([0.9659258262890683, 0.25881904510252074, 0.0, 0.0], [0.03, -0.05, 0.02])
}

fn rig_t_wg() -> RigidMotion {
    RigidMotion::from_wxyz([0.9238795325112867, 0.0, 0.0, 0.3826834323650898], [1.2, -0.4, 0.1])
}

fn solve_pairs(config: &RigConfig) -> Result<(RigidMotion, RigidMotion), String> {
    let pairs = synth::sample_pairs(&config.ground_truth(), config);
    let problem = HandEyeProblem {
        pairs: pairs
            .iter()
            .map(|p| HandEyePair {
                t_wm: p.t_wm,
                t_ig: p.t_ig,
            })
            .collect(),
        initial: None,
    };
    let sol = handeye::solve_handeye(&problem, &HandEyeOptions::default()).map_err(|e| e.to_string())?;
    Ok((sol.t_mi, sol.t_wg))
}

fn hand_eye() -> Outcome {
    let mut config = RigConfig {
        t_mi: rig_t_mi(),
        t_wg: rig_t_wg(),
        ..RigConfig::default()
    };
    config.pairs.count = 20;
    config.pairs.sigma_rot_rad = 0.0;
    config.pairs.sigma_trans_m = 0.0;
    config.mocap_noise.sigma_rot_rad = 0.0;
    config.mocap_noise.sigma_trans_m = 0.0;
    let (mi, wg) = solve_pairs(&config)?;
    let exact = [
        angle_deg(&mi, &config.t_mi).to_radians(),
        trans_err(&mi, &config.t_mi),
        angle_deg(&wg, &config.t_wg).to_radians(),
        trans_err(&wg, &config.t_wg),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let (mut worst_rot, mut worst_trans) = (0.0f64, 0.0f64);
    for trial in 1..=HE_TRIALS {
        let mut noisy = RigConfig::parse(b"", Some(100 + trial)).map_err(|e| e.to_string())?;
        noisy.t_mi = rig_t_mi();
        noisy.t_wg = rig_t_wg();
        noisy.pairs.count = 200;
        noisy.pairs.sigma_rot_rad = 0.2f64.to_radians();
        noisy.pairs.sigma_trans_m = 1e-3;
        let (mi, wg) = solve_pairs(&noisy)?;
        worst_rot = worst_rot.max(angle_deg(&mi, &noisy.t_mi)).max(angle_deg(&wg, &noisy.t_wg));
        worst_trans = worst_trans.max(trans_err(&mi, &noisy.t_mi)).max(trans_err(&wg, &noisy.t_wg));
    }
    check(
        exact < HE_EXACT_TOL && worst_rot < HE_ROT_TOL_DEG && worst_trans < HE_TRANS_TOL_M,
        format!(
            "noiseless max err {exact:.2e} (tol {HE_EXACT_TOL:e}); noisy {HE_TRIALS} trials worst {worst_rot:.4} deg / {:.3} mm (tol {HE_ROT_TOL_DEG} deg / {} mm)",
            worst_trans * 1e3,
            HE_TRANS_TOL_M * 1e3
        ),
    )
}

// --- 5 ------------------------------------------------------------------

fn imu_intrinsics() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut upper_exact = true;
    for seed in 1..=5u64 {
        let mut config = RigConfig::parse(b"", Some(seed)).map_err(|e| e.to_string())?;
        config.duration_s = 20.0;
        config.gyro_noise = ingest::SensorNoise { sigma_w: 0.0, sigma_b: 0.0 };
        config.accel_noise = ingest::SensorNoise { sigma_w: 0.0, sigma_b: 0.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(500 + seed);
        config.intrinsics = synth::random_intrinsics(&mut rng, 0.02, 0.1);
        let streams = synth::sample_imu(&config.ground_truth(), &config);
        let raw_g: Vec<_> = streams.raw.iter().map(|s| s.gyro).collect();
        let raw_a: Vec<_> = streams.raw.iter().map(|s| s.accel).collect();
        let ref_w: Vec<_> = streams.clean.iter().map(|s| s.gyro).collect();
        let ref_f: Vec<_> = streams.clean.iter().map(|s| s.accel).collect();
        let (m_g, b_g) = imucal::estimate_gyro_intrinsics(&raw_g, &ref_w).map_err(|e| e.to_string())?;
        let (m_a, b_a) = imucal::estimate_accel_intrinsics(&raw_a, &ref_f).map_err(|e| e.to_string())?;
        let t = &config.intrinsics;
        worst = worst
            .max(max_abs_diff(&m_g, &t.m_g))
            .max(max_abs_diff(&m_a, &t.m_a))
            .max((b_g - t.b_g).abs().max())
            .max((b_a - t.b_a).abs().max());
        upper_exact &= m_a[(0, 1)] == 0.0 && m_a[(0, 2)] == 0.0 && m_a[(1, 2)] == 0.0;
    }
    check(
        worst < INTR_TOL && upper_exact,
        format!("5 seeds: max entry err {worst:.2e} (tol {INTR_TOL:e}); M_a upper triangle exactly zero: {upper_exact}"),
    )
}

// --- 6 ------------------------------------------------------------------

fn traj(samples: Vec<PoseSample>) -> Result<Trajectory, String> {
    Trajectory::new(Frame::W, Frame::I, samples).map_err(|e| e.to_string())
}

/// Two ground-truth segments (start and end, split by a 5 s gap) visiting the
/// corners of an `a x b x c` box, and an estimate displaced by `s` along x
/// with the sign of the corner's parity. Within each segment the displacement
/// has zero mean and zero cross-covariance with the corners, so the optimal
/// alignment is the identity and the segment ATE is exactly `s`.
fn parity_box(s: f64) -> Result<(Trajectory, Trajectory), String> {
    let (a, b, c) = (3.0, 2.0, 1.0);
    let mut gt = Vec::new();
    let mut est = Vec::new();
    for k in 0..160 {
        let corner = k % 8;
        let sx = if corner & 1 == 0 { 1.0 } else { -1.0 };
        let sy = if corner & 2 == 0 { 1.0 } else { -1.0 };
        let sz = if corner & 4 == 0 { 1.0 } else { -1.0 };
        let p = Vector3::new(sx * a, sy * b, sz * c);
        let gap = if k >= 80 { 5_000_000_000 } else { 0 };
        let t = Timestamp(k as i64 * 50_000_000 + gap);
        gt.push(PoseSample::new(t, RigidMotion::from_translation(p)));
        let d = Vector3::new(sx * sy * sz * s, 0.0, 0.0);
        est.push(PoseSample::new(t, RigidMotion::from_translation(p + d)));
    }
    Ok((traj(gt)?, traj(est)?))
}

fn trajectory_metrics() -> Outcome {
    let truth = RigConfig::default().ground_truth();
    let stamps: Vec<i64> = (0..3000).map(|i| i * 10_000_000).collect();
    let gt = traj(
        stamps
            .iter()
            .map(|&t| PoseSample::new(Timestamp(t), truth.pose(t as f64 * 1e-9)))
            .collect(),
    )?;
    let opts = EvalOptions {
        delta_s: 1.0,
        ..EvalOptions::default()
    };

    let rigid = RigidMotion::from_wxyz([0.8, 0.2, -0.4, 0.4], [5.0, -3.0, 12.0]);
    let moved = gt.map_poses(Frame::W, Frame::I, |p| rigid.compose(p));
    let ate = trajeval::evaluate(&gt, &moved, &opts).map_err(|e| e.to_string())?.ate_m;

    let v = Vector3::new(0.03, -0.04, 0.12);
    let drifted = traj(
        gt.samples()
            .iter()
            .map(|s| {
                let shift = RigidMotion::from_translation(v * s.t.as_secs_f64());
                PoseSample::new(s.t, shift.compose(&s.pose))
            })
            .collect(),
    )?;
    let rpe = trajeval::evaluate(&gt, &drifted, &opts)
        .map_err(|e| e.to_string())?
        .rpe_trans_m
        .ok_or("no RPE pairs")?;
    let rpe_err = (rpe - v.norm() * opts.delta_s).abs();

    let classify = |s: f64| -> Result<(bool, f64), String> {
        let (g, e) = parity_box(s)?;
        let r = trajeval::evaluate(&g, &e, &EvalOptions::default()).map_err(|e| e.to_string())?;
        Ok((r.diverged, r.end_segment_ate_m.ok_or("no end segment")?))
    };
    let (below, ate_below) = classify(DIVERGENCE_THRESHOLD_M - 1e-6)?;
    let (above, ate_above) = classify(DIVERGENCE_THRESHOLD_M + 1e-6)?;
    let at = trajeval::is_diverged(DIVERGENCE_THRESHOLD_M);
    let just_above = trajeval::is_diverged(f64::from_bits(DIVERGENCE_THRESHOLD_M.to_bits() + 1));
    let flips = !below && above && !at && just_above;
    check(
        ate < ATE_TOL && rpe_err < RPE_TOL && flips,
        format!(
            "rigid-copy ATE {ate:.2e} (tol {ATE_TOL:e}); drift RPE err {rpe_err:.2e} (tol {RPE_TOL:e}); \
             end ATE {ate_below:.7} -> diverged={below}, {ate_above:.7} -> diverged={above}, at 2 m -> {at}"
        ),
    )
}

// --- 7 ------------------------------------------------------------------

fn photometric_checks() -> Outcome {
    let config = RigConfig::default();
    let (set, truth, _) = synth::sample_views(&config);
    let views: Vec<_> = set.views.into_iter().map(|(v, _)| v).collect();
    let est = photometric::estimate_vignette(
        &views,
        set.texture_width,
        set.texture_height,
        &VignetteOptions {
            max_iterations: 5000,
            relative_tolerance: 0.0,
        },
    )
    .map_err(|e| e.to_string())?;
    let pixel_err = est
        .vignette
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let monotone = est.objective_history.windows(2).all(|w| w[1] <= w[0]);

    let model = ExposureModel::new(0.5, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let samples: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            let lux = 10f64.powf(rng.random_range(0.0..5.0));
            (lux, model.predict(lux))
        })
        .collect();
    let clamped = samples.iter().filter(|s| s.1 <= model.t_min || s.1 >= model.t_max).count();
    let fit = photometric::fit_exposure_control(&samples, model.t_min, model.t_max).map_err(|e| e.to_string())?;
    let k_err = (fit.k - model.k).abs();
    check(
        pixel_err < VIGNETTE_TOL && monotone && k_err < EXPOSURE_K_TOL,
        format!(
            "{} views: vignette max pixel err {pixel_err:.2e} (tol {VIGNETTE_TOL:e}) after {} iterations, \
             objective non-increasing over {} half-steps: {monotone}; exposure k err {k_err:.2e} (tol {EXPOSURE_K_TOL:e}, {clamped} clamped samples excluded)",
            views.len(),
            est.iterations,
            est.objective_history.len()
        ),
    )
}

// --- 8 ------------------------------------------------------------------

const E2E_STATIC_RIG: &str = "\
[rig]
duration_s = 7200
imu_hz = 100
mocap_hz = 1
camera_hz = 1
[trajectory]
kind = static
[noise]
gyro_sigma_w = 8.0e-5
gyro_sigma_b = 1.6e-4
accel_sigma_w = 1.4e-3
accel_sigma_b = 2.8e-3
[pairs]
count = 0
[camera]
views = 2
";

const E2E_MOTION_RIG: &str = "\
[rig]
duration_s = 60
mocap_offset_ns = 12345600
[trajectory]
kind = random
max_frequency_hz = 3
max_translation_m = 0.3
max_rotation_deg = 60
[mocap]
sigma_rot_deg = 0.1
sigma_trans_m = 0.0005
[M_a]
row0 = 1.01, 0, 0
row1 = 0.004, 0.995, 0
row2 = -0.003, 0.006, 1.003
[M_g]
row0 = 0.998, 0.003, -0.002
row1 = -0.004, 1.004, 0.005
row2 = 0.002, -0.006, 0.997
[b_a]
value = 0.05, -0.08, 0.12
[b_g]
value = 0.004, -0.002, 0.003
[T_MI]
translation = 0.03, -0.05, 0.02
rotation_wxyz = 0.9659258262890683, 0.25881904510252074, 0, 0
[T_WG]
translation = 1.2, -0.4, 0.1
rotation_wxyz = 0.9238795325112867, 0, 0, 0.3826834323650898
";

fn cli(args: &[&str]) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let argv = std::iter::once("vicalib").chain(args.iter().copied());
    let code = vicalib::cli::run_with_output(argv, &mut out);
    let text = String::from_utf8_lossy(&out).into_owned();
    if code != 0 {
        return Err(format!("`{}` exited {code}", args.join(" ")));
    }
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    std::fs::write(root.join("static.txt"), E2E_STATIC_RIG).map_err(|e| e.to_string())?;
    std::fs::write(root.join("motion.txt"), E2E_MOTION_RIG).map_err(|e| e.to_string())?;
    let (stat, motion) = (p("static"), p("motion"));
    let calib = format!("{motion}/calib.txt");

    cli(&["simulate", "--config", &p("static.txt"), "--out", &stat])?;
    cli(&["simulate", "--config", &p("motion.txt"), "--out", &motion])?;
    for sensor in ["gyro", "accel"] {
        cli(&[
            "allan", "--dataset", &stat, "--calib", &calib, "--sensor", sensor, "--fit", "--white-range", "0.02,0.1",
            "--rw-range", "5,100",
        ])?;
    }
    cli(&["timesync", "--dataset", &motion])?;
    cli(&["handeye", "--dataset", &motion])?;
    cli(&["imu-calib", "--dataset", &motion])?;
    cli(&["vignette", "--dataset", &motion, "--out", &p("vignette.pgm")])?;
    cli(&["exposure-fit", "--dataset", &motion])?;
    let elapsed = start.elapsed();

    let load = |path: &str| -> Result<CalibrationFile, String> {
        ingest::load_calibration(Path::new(path)).map_err(|e| e.to_string())
    };
    let got = load(&calib)?;
    let truth = load(&format!("{motion}/truth.txt"))?;
    let noise_truth = load(&format!("{stat}/truth.txt"))?;

    let mut fails = Vec::new();
    let mut notes = Vec::new();
    let mut expect = |name: &str, err: f64, tol: f64| {
        notes.push(format!("{name} {err:.3e}"));
        if !(err < tol) {
            fails.push(format!("{name} {err:.3e} >= {tol:e}"));
        }
    };
    expect(
        "shift_ns",
        (got.mocap_imu_shift_ns - truth.mocap_imu_shift_ns).abs() as f64,
        E2E_SHIFT_TOL_NS as f64,
    );
    expect("T_MI_deg", angle_deg(&got.t_mi, &truth.t_mi), E2E_ROT_TOL_DEG);
    expect("T_MI_m", trans_err(&got.t_mi, &truth.t_mi), E2E_TRANS_TOL_M);
    expect("T_WG_deg", angle_deg(&got.t_wg, &truth.t_wg), E2E_ROT_TOL_DEG);
    expect("T_WG_m", trans_err(&got.t_wg, &truth.t_wg), E2E_TRANS_TOL_M);
    let (gi, ti) = (&got.intrinsics, &truth.intrinsics);
    expect("M_g", max_abs_diff(&gi.m_g, &ti.m_g), E2E_M_G_TOL);
    expect("b_g", (gi.b_g - ti.b_g).abs().max(), E2E_B_G_TOL);
    expect("M_a", max_abs_diff(&gi.m_a, &ti.m_a), E2E_M_A_TOL);
    expect("b_a", (gi.b_a - ti.b_a).abs().max(), E2E_B_A_TOL);
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    expect("gyro_sigma_w", rel(got.gyro_noise.sigma_w, noise_truth.gyro_noise.sigma_w), E2E_SIGMA_W_REL);
    expect("gyro_sigma_b", rel(got.gyro_noise.sigma_b, noise_truth.gyro_noise.sigma_b), E2E_SIGMA_B_REL);
    expect("accel_sigma_w", rel(got.accel_noise.sigma_w, noise_truth.accel_noise.sigma_w), E2E_SIGMA_W_REL);
    expect("accel_sigma_b", rel(got.accel_noise.sigma_b, noise_truth.accel_noise.sigma_b), E2E_SIGMA_B_REL);
    match (got.exposure, truth.exposure) {
        (Some(g), Some(t)) => {
            expect("exposure_k", rel(g.k, t.k), E2E_K_REL);
            expect("exposure_t_min", rel(g.t_min, t.t_min), E2E_K_REL);
            expect("exposure_t_max", rel(g.t_max, t.t_max), E2E_K_REL);
        }
        _ => expect("exposure_missing", f64::INFINITY, 0.0),
    }
    let v_est = photometric::load_pgm(Path::new(&p("vignette.pgm"))).map_err(|e| e.to_string())?;
    let v_truth = photometric::load_pgm(&Path::new(&motion).join(synth::VIEWS_DIR).join(synth::VIGNETTE_TRUTH_FILE))
        .map_err(|e| e.to_string())?;
    let v_err = v_est
        .values
        .iter()
        .zip(&v_truth.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    expect("vignette", v_err, E2E_VIGNETTE_TOL);
    if elapsed >= E2E_BUDGET {
        fails.push(format!("runtime {:.1} s >= {} s", elapsed.as_secs_f64(), E2E_BUDGET.as_secs()));
    }
    let summary = format!("{:.1} s (budget {} s): {}", elapsed.as_secs_f64(), E2E_BUDGET.as_secs(), notes.join(", "));
    if fails.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; FAILED {}", fails.join(", ")))
    }
}

// --- 9 ------------------------------------------------------------------

fn seeds() -> Vec<(&'static str, Vec<u8>)> {
    let config = RigConfig {
        duration_s: 0.5,
        ..RigConfig::default()
    };
    let gt = config.ground_truth();
    let imu = synth::sample_imu(&gt, &config).raw;
    let mocap = synth::sample_mocap(&gt, &config);
    let mut pairs_cfg = config.clone();
    pairs_cfg.pairs.count = 3;
    let pairs = synth::sample_pairs(&gt, &pairs_cfg);
    let exposures = synth::sample_exposures(&config);
    let mut small = config.clone();
    small.camera.width = 4;
    small.camera.height = 3;
    small.camera.texture_width = 6;
    small.camera.texture_height = 5;
    small.camera.views = 2;
    let (views, vignette, _) = synth::sample_views(&small);
    let dir = tempfile::tempdir().unwrap();
    photometric::write_view_set(dir.path(), &views).unwrap();
    let index = std::fs::read(dir.path().join(photometric::VIEWS_FILE)).unwrap();
    vec![
        ("imu", ingest::format_imu(&imu[..6]).into_bytes()),
        ("trajectory", ingest::format_trajectory(&mocap).into_bytes()),
        ("pairs", ingest::format_pairs(&pairs).into_bytes()),
        ("exposures", ingest::format_exposures(&exposures[..4]).into_bytes()),
        ("calibration", config.truth().to_text().into_bytes()),
        ("ini", E2E_MOTION_RIG.as_bytes().to_vec()),
        ("rig", E2E_MOTION_RIG.as_bytes().to_vec()),
        ("pgm", photometric::format_pgm16(&vignette)),
        ("views", index),
    ]
}

fn parse(kind: &str, bytes: &[u8]) -> bool {
    match kind {
        "imu" => ingest::parse_imu(bytes).is_ok(),
        "trajectory" => ingest::parse_trajectory(bytes, Frame::W, Frame::M).is_ok(),
        "pairs" => ingest::parse_pairs(bytes).is_ok(),
        "exposures" => ingest::parse_exposures(bytes).is_ok(),
        "calibration" => CalibrationFile::parse(bytes).is_ok(),
        "ini" => ingest::Ini::parse(bytes).is_ok(),
        "rig" => RigConfig::parse(bytes, None).is_ok(),
        "pgm" => photometric::parse_pgm(bytes).is_ok(),
        "views" => photometric::parse_view_index(bytes).is_ok(),
        _ => unreachable!(),
    }
}

const TOKENS: &[&[u8]] = &[
    b",", b"\n", b"\r\n", b"#", b"=", b"[", b"]", b"-", b".", b"e", b"nan", b"inf", b"-1", b"0", b"1e308",
    b"99999999999999999999", b"\xff", b"\0", b" ", b"P5", b"65535", b"255",
];

fn mutate(seed: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut v = seed.to_vec();
    for _ in 0..rng.random_range(1..8) {
        let at = if v.is_empty() { 0 } else { rng.random_range(0..v.len()) };
        match rng.random_range(0..5) {
            0 if !v.is_empty() => v[at] = rng.random(),
            1 => {
                let tok = TOKENS[rng.random_range(0..TOKENS.len())];
                v.splice(at..at, tok.iter().copied());
            }
            2 if !v.is_empty() => {
                let end = (at + rng.random_range(1..16)).min(v.len());
                v.drain(at..end);
            }
            3 => v.truncate(at),
            _ => {
                if !v.is_empty() {
                    let from = rng.random_range(0..v.len());
                    let end = (from + rng.random_range(1..32)).min(v.len());
                    let chunk = v[from..end].to_vec();
                    v.splice(at..at, chunk);
                }
            }
        }
    }
    v
}

fn fuzz_parsers() -> Outcome {
    let previous = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut total = 0usize;
    let mut crashes = Vec::new();
    let mut accepted = Vec::new();
    for (kind, seed) in seeds() {
        if !parse(kind, &seed) {
            crashes.push(format!("{kind}: seed input rejected"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut ok = 0usize;
        for i in 0..FUZZ_INPUTS_PER_PARSER {
            let input = if i % 4 == 0 {
                let len = rng.random_range(0..256);
                (0..len).map(|_| rng.random()).collect()
            } else {
                mutate(&seed, &mut rng)
            };
            match catch_unwind(AssertUnwindSafe(|| parse(kind, &input))) {
                Ok(true) => ok += 1,
                Ok(false) => {}
                Err(_) => {
                    if crashes.len() < 5 {
                        crashes.push(format!("{kind}: panic on {:?}", String::from_utf8_lossy(&input)));
                    }
                }
            }
            total += 1;
        }
        accepted.push(format!("{kind}:{ok}"));
    }
    std::panic::set_hook(previous);
    check(
        crashes.is_empty(),
        format!(
            "{total} inputs over 9 parsers, {} crashes; accepted per parser {}{}",
            crashes.len(),
            accepted.join(" "),
            if crashes.is_empty() { String::new() } else { format!("; {}", crashes.join("; ")) }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("allan white noise", allan_white),
        ("allan random walk", allan_random_walk),
        ("time sync", time_sync),
        ("hand-eye", hand_eye),
        ("imu intrinsics", imu_intrinsics),
        ("trajectory metrics", trajectory_metrics),
        ("photometric", photometric_checks),
        ("end-to-end", end_to_end),
        ("parser fuzzing", fuzz_parsers),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("criterion {n} PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
