//! Command-line front end. Every stage reads and updates one `calib.txt`;
//! results are printed as `key=value` lines on stdout.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use crate::allan::{self, AllanError};
use crate::geometry::Timestamp;
use crate::handeye::{self, HandEyeError, HandEyeOptions, HandEyePair, HandEyeProblem};
use crate::imucal::{self, ImuCalError};
use crate::ingest::{self, CalibrationFile, DatasetDir, IngestError, LoadWarning, SensorNoise};
use crate::photometric::{self, PhotometricError, VignetteOptions};
use crate::synth::{self, RigConfig, SynthError};
use crate::timesync::{self, TimeSyncError, TimeSyncOptions};
use crate::trajeval::{self, EvalError, EvalOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Photometric(#[from] PhotometricError),
    #[error(transparent)]
    Allan(#[from] AllanError),
    #[error(transparent)]
    TimeSync(#[from] TimeSyncError),
    #[error(transparent)]
    HandEye(#[from] HandEyeError),
    #[error(transparent)]
    ImuCal(#[from] ImuCalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use PhotometricError as P;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Ingest(_) | CliError::Synth(_) | CliError::Data(_) => EXIT_DATA,
            CliError::Photometric(
                P::Pgm(_) | P::ViewSet(_) | P::Io { .. } | P::SizeMismatch(_) | P::MissingCorrespondence { .. },
            ) => EXIT_DATA,
            CliError::Photometric(_)
            | CliError::Allan(_)
            | CliError::TimeSync(_)
            | CliError::HandEye(_)
            | CliError::ImuCal(_)
            | CliError::Eval(_) => EXIT_NUMERIC,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vicalib", version, about = "Visual-inertial rig calibration and trajectory evaluation")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Overrides the random seed of commands that draw random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known calibration (truth.txt).
    Simulate(SimulateArgs),
    /// Allan deviation of a static IMU log and noise density fit.
    Allan(AllanArgs),
    /// Estimate the MoCap-to-IMU clock offset.
    Timesync(TimesyncArgs),
    /// Solve for T_MI and T_WG from synchronized pose pairs.
    Handeye(HandeyeArgs),
    /// Estimate IMU scale/misalignment matrices and biases against MoCap.
    ImuCalib(ImuCalibArgs),
    /// Estimate a vignette map from views of a planar target.
    Vignette(VignetteArgs),
    /// Fit the auto-exposure law to logged exposures and illuminance.
    ExposureFit(ExposureFitArgs),
    /// ATE / RPE / divergence of an estimated trajectory.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Calibration file to read and update [default: <dataset>/calib.txt].
    #[arg(long)]
    calib: Option<PathBuf>,
}

impl DatasetArgs {
    fn dir(&self) -> Result<DatasetDir> {
        self.dataset
            .as_ref()
            .map(DatasetDir::new)
            .ok_or_else(|| CliError::Usage("--dataset is required".into()))
    }

    fn calib_path(&self) -> Result<PathBuf> {
        match (&self.calib, &self.dataset) {
            (Some(c), _) => Ok(c.clone()),
            (None, Some(d)) => Ok(DatasetDir::new(d).calib()),
            (None, None) => Err(CliError::Usage("need --calib or --dataset".into())),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Rig description; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Sensor {
    Gyro,
    Accel,
}

#[derive(Debug, Args)]
struct AllanArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Write the curve as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit sigma_w and sigma_b and store them in calib.txt.
    #[arg(long)]
    fit: bool,
    #[arg(long, value_enum, default_value = "gyro")]
    sensor: Sensor,
    /// Axes averaged for the fit, e.g. `1,2`.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2])]
    axes: Vec<usize>,
    /// Tau range `lo,hi` (s) of the white-noise fit.
    #[arg(long, value_parser = parse_range)]
    white_range: Option<(f64, f64)>,
    /// Tau range `lo,hi` (s) of the random-walk fit.
    #[arg(long, value_parser = parse_range)]
    rw_range: Option<(f64, f64)>,
    /// Cluster sizes per decade.
    #[arg(long, default_value_t = 20)]
    per_decade: usize,
}

#[derive(Debug, Args)]
struct TimesyncArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Grid step in microseconds.
    #[arg(long, default_value_t = 100.0)]
    step_us: f64,
    /// Half-width of the search window around the coarse guess, seconds.
    #[arg(long, default_value_t = 0.5)]
    window_s: f64,
    #[arg(long, default_value_t = timesync::DEFAULT_MEDIAN_WINDOW)]
    median_window: usize,
    /// MoCap samples on each side of the rate difference stencil.
    #[arg(long, default_value_t = timesync::DEFAULT_RATE_STRIDE)]
    rate_stride: usize,
    /// Half-width (ms) of the rotation-aligned vector refinement; 0 disables.
    #[arg(long, default_value_t = timesync::DEFAULT_VECTOR_HALF_WINDOW_NS as f64 * 1e-6)]
    vector_window_ms: f64,
    /// Write the cost curve as CSV.
    #[arg(long)]
    dump_cost: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HandeyeArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Pose pairs [default: <dataset>/pairs.csv].
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Also write `T_WI` ground truth (IMU clock) derived from mocap.csv.
    #[arg(long)]
    gt_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImuCalibArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// MoCap samples between differencing stencil points.
    #[arg(long, default_value_t = 2)]
    stride: usize,
}

#[derive(Debug, Args)]
struct VignetteArgs {
    /// Directory with views.txt and the view images [default: <dataset>/views].
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output 16-bit PGM.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = VignetteOptions::default().max_iterations)]
    max_iterations: usize,
    #[arg(long, default_value_t = VignetteOptions::default().relative_tolerance)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct ExposureFitArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Shortest exposure, seconds [default: smallest logged exposure].
    #[arg(long)]
    t_min_s: Option<f64>,
    /// Longest exposure, seconds [default: largest logged exposure].
    #[arg(long)]
    t_max_s: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Ground truth in the mocap.csv schema.
    #[arg(long)]
    gt: PathBuf,
    /// Estimate in the mocap.csv schema.
    #[arg(long)]
    est: PathBuf,
    #[arg(long, default_value_t = trajeval::DEFAULT_DELTA_S)]
    delta_s: f64,
    /// Ground-truth gaps longer than this split segments, seconds.
    #[arg(long, default_value_t = trajeval::DEFAULT_GAP_S)]
    gap_s: f64,
    /// Largest estimate-to-ground-truth stamp distance accepted, seconds.
    #[arg(long, default_value_t = trajeval::DEFAULT_MAX_GAP_S)]
    max_gap_s: f64,
    /// Accepted for dataset-style invocations; unused.
    #[arg(long, hide = true)]
    dataset: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Output goes to `out`, diagnostics to stderr.
pub fn run_with_output<I, T>(argv: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    log::set_max_level(level);
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// [`run_with_output`] writing to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_output(argv, &mut std::io::stdout().lock())
}

fn dispatch(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let lines = match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed)?,
        Command::Allan(a) => allan_cmd(a)?,
        Command::Timesync(a) => timesync_cmd(a)?,
        Command::Handeye(a) => handeye_cmd(a)?,
        Command::ImuCalib(a) => imu_calib(a)?,
        Command::Vignette(a) => vignette(a)?,
        Command::ExposureFit(a) => exposure_fit(a)?,
        Command::Evaluate(a) => evaluate(a)?,
    };
    for l in lines {
        writeln!(out, "{l}").map_err(|e| CliError::Data(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn report_warnings(warnings: &[LoadWarning]) {
    for w in warnings {
        warn!("line {}: {}", w.line, w.message);
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn update_calib(path: &Path, f: impl FnOnce(&mut CalibrationFile)) -> Result<CalibrationFile> {
    let mut calib = ingest::load_or_default_calibration(path)?;
    f(&mut calib);
    ingest::write_calibration(&calib, path)?;
    Ok(calib)
}

fn read_config(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<Vec<String>> {
    let config = match &a.config {
        Some(p) => RigConfig::parse(&read_config(p)?, seed).map_err(|e| match e {
            SynthError::Ingest(i) => CliError::Ingest(IngestError::InFile {
                path: p.clone(),
                source: Box::new(i),
            }),
            SynthError::Config(m) => CliError::Data(format!("{}: {m}", p.display())),
            other => other.into(),
        })?,
        None => {
            let mut c = RigConfig::default();
            if let Some(s) = seed {
                c = RigConfig::parse(b"", Some(s))?;
                info!("seed {s}");
            }
            c
        }
    };
    let dir = synth::emit_dataset(&config, &a.out)?;
    Ok(vec![
        format!("out={}", dir.path.display()),
        format!("seed={}", config.seed),
        format!("duration_s={}", config.duration_s),
        format!("mocap_imu_ns={}", config.mocap_offset_ns),
    ])
}

fn median_period_s(stamps: &[Timestamp]) -> Option<f64> {
    let mut d: Vec<i64> = stamps.windows(2).map(|w| w[1].0 - w[0].0).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_unstable();
    Some(d[d.len() / 2] as f64 * 1e-9)
}

fn parse_range(text: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [lo, hi] = parts.as_slice() else {
        return Err("expected lo,hi".into());
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err("expected 0 < lo < hi".into());
    }
    Ok((lo, hi))
}

fn allan_cmd(a: &AllanArgs) -> Result<Vec<String>> {
    let dir = a.dataset.dir()?;
    if a.axes.is_empty() || a.axes.iter().any(|&x| x > 2) {
        return Err(CliError::Usage("--axes takes indices 0, 1, 2".into()));
    }
    let white_range = a.white_range.unwrap_or(allan::DEFAULT_WHITE_RANGE);
    let rw_range = a.rw_range.unwrap_or(allan::DEFAULT_RW_RANGE);
    let imu = ingest::load_imu(&dir.imu())?;
    let stamps: Vec<Timestamp> = imu.iter().map(|s| s.t).collect();
    let tau0 = median_period_s(&stamps).ok_or_else(|| CliError::Data("imu.csv has fewer than 2 samples".into()))?;
    let series: Vec<_> = imu
        .iter()
        .map(|s| if a.sensor == Sensor::Gyro { s.gyro } else { s.accel })
        .collect();
    let sizes = allan::default_cluster_sizes(series.len(), a.per_decade.max(1));
    let curves = allan::allan_deviation_axes(&series, tau0, &sizes)?;
    let name = if a.sensor == Sensor::Gyro { "gyro" } else { "accel" };
    let mut lines = vec![
        format!("sensor={name}"),
        format!("samples={}", series.len()),
        format!("tau0_s={tau0}"),
        format!("points={}", curves.mean.len()),
    ];
    if let Some(path) = &a.out {
        let mut csv = String::from("#tau_s,dev_x,dev_y,dev_z,dev_mean\n");
        for i in 0..curves.mean.len() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                ingest::fmt_exact(curves.mean.tau[i]),
                ingest::fmt_exact(curves.axes[0].dev[i]),
                ingest::fmt_exact(curves.axes[1].dev[i]),
                ingest::fmt_exact(curves.axes[2].dev[i]),
                ingest::fmt_exact(curves.mean.dev[i]),
            ));
        }
        write_text(path, &csv)?;
        lines.push(format!("curve={}", path.display()));
    }
    if a.fit {
        let curve = curves.average_of(&a.axes);
        let params = allan::fit_noise_params(&curve, &curve, white_range, rw_range)?;
        let noise = SensorNoise {
            sigma_w: params.sigma_w,
            sigma_b: params.sigma_b,
        };
        let calib_path = a.dataset.calib_path()?;
        update_calib(&calib_path, |c| match a.sensor {
            Sensor::Gyro => c.gyro_noise = noise,
            Sensor::Accel => c.accel_noise = noise,
        })?;
        lines.push(format!("sigma_w={:e}", params.sigma_w));
        lines.push(format!("sigma_b={:e}", params.sigma_b));
        lines.push(format!("calib={}", calib_path.display()));
    }
    Ok(lines)
}

fn timesync_cmd(a: &TimesyncArgs) -> Result<Vec<String>> {
    let dir = a.dataset.dir()?;
    if !(a.step_us > 0.0 && a.window_s > 0.0 && a.window_s < 10.0) {
        return Err(CliError::Usage("--step-us and --window-s must be positive (window below 10 s)".into()));
    }
    let imu = ingest::load_imu(&dir.imu())?;
    let (mocap, warnings) = ingest::load_mocap(&dir.mocap())?;
    report_warnings(&warnings);
    let options = TimeSyncOptions {
        step_ns: (a.step_us * 1e3).round() as i64,
        half_window_ns: (a.window_s * 1e9).round() as i64,
        median_window: a.median_window,
        rate_stride: a.rate_stride,
        vector_half_window_ns: (a.vector_window_ms * 1e6).round() as i64,
    };
    let est = timesync::time_align(&imu, &mocap, &options)?;
    if let Some(path) = &a.dump_cost {
        let mut csv = String::from("#offset_ns,cost\n");
        for (o, c) in &est.cost_curve {
            csv.push_str(&format!("{o},{}\n", ingest::fmt_exact(*c)));
        }
        write_text(path, &csv)?;
    }
    let calib_path = a.dataset.calib_path()?;
    update_calib(&calib_path, |c| c.mocap_imu_shift_ns = est.offset_ns)?;
    Ok(vec![
        format!("offset_ns={}", est.offset_ns),
        format!("offset_exact_ns={:.3}", est.offset_exact_ns),
        format!("grid_offset_ns={}", est.grid_offset_ns),
        format!("grid_points={}", est.cost_curve.len()),
        format!("calib={}", calib_path.display()),
    ])
}

fn handeye_cmd(a: &HandeyeArgs) -> Result<Vec<String>> {
    let pairs_path = match (&a.pairs, &a.dataset.dataset) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => DatasetDir::new(d).pairs(),
        (None, None) => return Err(CliError::Usage("need --pairs or --dataset".into())),
    };
    let (pairs, warnings) = ingest::load_pairs(&pairs_path)?;
    report_warnings(&warnings);
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
    let options = HandEyeOptions {
        max_iterations: a.max_iterations,
        ..Default::default()
    };
    let sol = handeye::solve_handeye(&problem, &options)?;
    if !sol.converged {
        warn!("hand-eye stopped after {} iterations without converging", sol.iterations);
    }
    let calib_path = a.dataset.calib_path()?;
    let calib = update_calib(&calib_path, |c| {
        c.t_mi = sol.t_mi;
        c.t_wg = sol.t_wg;
    })?;
    let mut lines = vec![
        format!("pairs={}", pairs.len()),
        format!("iterations={}", sol.iterations),
        format!("converged={}", sol.converged),
        format!("rms_residual={:e}", sol.rms_residual),
        format!("t_mi={}", pose_string(&sol.t_mi)),
        format!("t_wg={}", pose_string(&sol.t_wg)),
        format!("calib={}", calib_path.display()),
    ];
    if let Some(gt_path) = &a.gt_out {
        let dir = a.dataset.dir()?;
        let (mocap, warnings) = ingest::load_mocap(&dir.mocap())?;
        report_warnings(&warnings);
        let gt = handeye::convert_mocap_to_gt(&mocap.shifted(-calib.mocap_imu_shift_ns), &sol.t_mi);
        ingest::write_trajectory(gt_path, &gt)?;
        lines.push(format!("gt={}", gt_path.display()));
    }
    Ok(lines)
}

fn pose_string(p: &crate::geometry::RigidMotion) -> String {
    let t = p.translation();
    let q = p.quaternion_wxyz();
    format!("{},{},{},{},{},{},{}", t[0], t[1], t[2], q[0], q[1], q[2], q[3])
}

fn imu_calib(a: &ImuCalibArgs) -> Result<Vec<String>> {
    let dir = a.dataset.dir()?;
    if a.stride == 0 {
        return Err(CliError::Usage("--stride must be at least 1".into()));
    }
    let calib_path = a.dataset.calib_path()?;
    let calib = ingest::load_or_default_calibration(&calib_path)?;
    let imu = ingest::load_imu(&dir.imu())?;
    let (mocap, warnings) = ingest::load_mocap(&dir.mocap())?;
    report_warnings(&warnings);
    // MoCap stamps onto the IMU clock, marker poses onto the IMU body
    let gt = handeye::convert_mocap_to_gt(&mocap.shifted(-calib.mocap_imu_shift_ns), &calib.t_mi);
    let refs = imucal::reference_from_trajectory_smoothed(&gt, &imucal::gravity_vector(), a.stride);
    let mut raw_g = Vec::with_capacity(refs.len());
    let mut raw_a = Vec::with_capacity(refs.len());
    let mut ref_w = Vec::with_capacity(refs.len());
    let mut ref_f = Vec::with_capacity(refs.len());
    for r in &refs {
        if let Some((g, acc)) = imucal::interpolate_imu(&imu, r.t) {
            raw_g.push(g);
            raw_a.push(acc);
            ref_w.push(r.omega);
            ref_f.push(r.specific_force);
        }
    }
    info!("{} reference samples", ref_w.len());
    let (m_g, b_g) = imucal::estimate_gyro_intrinsics(&raw_g, &ref_w)?;
    let (m_a, b_a) = imucal::estimate_accel_intrinsics(&raw_a, &ref_f)?;
    let intrinsics = imucal::ImuIntrinsics { m_a, m_g, b_a, b_g };
    intrinsics.validate()?;
    update_calib(&calib_path, |c| c.intrinsics = intrinsics)?;
    let flat = |m: &nalgebra::Matrix3<f64>| {
        m.transpose().iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
    };
    let vec3 = |v: &nalgebra::Vector3<f64>| format!("{},{},{}", v[0], v[1], v[2]);
    Ok(vec![
        format!("samples={}", ref_w.len()),
        format!("m_g={}", flat(&m_g)),
        format!("b_g={}", vec3(&b_g)),
        format!("m_a={}", flat(&m_a)),
        format!("b_a={}", vec3(&b_a)),
        format!("calib={}", calib_path.display()),
    ])
}

fn vignette(a: &VignetteArgs) -> Result<Vec<String>> {
    let images = match (&a.images, &a.dataset) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join(synth::VIEWS_DIR),
        (None, None) => return Err(CliError::Usage("need --images or --dataset".into())),
    };
    let set = photometric::load_view_set(&images)?;
    let views: Vec<_> = set.views.into_iter().map(|(v, _)| v).collect();
    let est = photometric::estimate_vignette(
        &views,
        set.texture_width,
        set.texture_height,
        &VignetteOptions {
            max_iterations: a.max_iterations,
            relative_tolerance: a.tolerance,
        },
    )?;
    photometric::write_pgm16(&a.out, &est.vignette)?;
    let min = est.vignette.values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(vec![
        format!("views={}", views.len()),
        format!("iterations={}", est.iterations),
        format!("converged={}", est.converged),
        format!("objective={:e}", est.objective_history.last().copied().unwrap_or(0.0)),
        format!("vignette_min={min:.6}"),
        format!("out={}", a.out.display()),
    ])
}

fn exposure_fit(a: &ExposureFitArgs) -> Result<Vec<String>> {
    let dir = a.dataset.dir()?;
    let records = ingest::load_exposures(&dir.exposures())?;
    let samples: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.lux.map(|l| (l, r.exposure_s())))
        .collect();
    if samples.is_empty() {
        return Err(CliError::Data(format!("{}: no rows carry illuminance", dir.exposures().display())));
    }
    let observed_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let observed_max = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let t_min = a.t_min_s.unwrap_or(observed_min);
    let t_max = a.t_max_s.unwrap_or(observed_max);
    let model = photometric::fit_exposure_control(&samples, t_min, t_max)?;
    let used = samples.iter().filter(|s| s.1 > t_min && s.1 < t_max).count();
    let calib_path = a.dataset.calib_path()?;
    update_calib(&calib_path, |c| c.exposure = Some(model))?;
    Ok(vec![
        format!("k={:e}", model.k),
        format!("t_min_s={:e}", model.t_min),
        format!("t_max_s={:e}", model.t_max),
        format!("samples={}", samples.len()),
        format!("unsaturated={used}"),
        format!("calib={}", calib_path.display()),
    ])
}

fn evaluate(a: &EvaluateArgs) -> Result<Vec<String>> {
    if !(a.delta_s > 0.0 && a.gap_s > 0.0 && a.max_gap_s > 0.0) {
        return Err(CliError::Usage("--delta-s, --gap-s and --max-gap-s must be positive".into()));
    }
    let (gt, w1) = ingest::load_mocap(&a.gt)?;
    let (est, w2) = ingest::load_mocap(&a.est)?;
    report_warnings(&w1);
    report_warnings(&w2);
    let report = trajeval::evaluate(
        &gt,
        &est,
        &EvalOptions {
            delta_s: a.delta_s,
            gap_threshold_s: a.gap_s,
            max_gap_s: a.max_gap_s,
        },
    )?;
    Ok(report.to_lines())
}
