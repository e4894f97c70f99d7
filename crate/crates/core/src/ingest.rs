//! On-disk dataset layout: CSV streams and the INI-style calibration file.
//!
//! All CSV files are comma separated with a single `#`-prefixed header line,
//! UNIX newlines and ASCII decimal numbers:
//!
//! ```text
//! imu.csv        #t_ns,gx,gy,gz,ax,ay,az,temp_c      (temp_c may be empty)
//! mocap.csv      #t_ns,tx,ty,tz,qw,qx,qy,qz
//! exposures.csv  #t_ns,exposure_ns,lux                (lux may be empty)
//! pairs.csv      #t_ns,wm_tx,...,wm_qz,ig_tx,...,ig_qz
//! ```
//!
//! Data files use the shortest decimal representation that round-trips; the
//! calibration file uses 17 significant digits. Either way a load after a
//! write reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{Frame, PoseSample, RigidMotion, Timestamp, Trajectory};
use crate::imucal::{ImuIntrinsics, ImuSample};
use crate::photometric::ExposureModel;

pub const IMU_HEADER: &str = "#t_ns,gx,gy,gz,ax,ay,az,temp_c";
pub const MOCAP_HEADER: &str = "#t_ns,tx,ty,tz,qw,qx,qy,qz";
pub const EXPOSURE_HEADER: &str = "#t_ns,exposure_ns,lux";
pub const PAIRS_HEADER: &str =
    "#t_ns,wm_tx,wm_ty,wm_tz,wm_qw,wm_qx,wm_qy,wm_qz,ig_tx,ig_ty,ig_tz,ig_qw,ig_qx,ig_qy,ig_qz";

/// Quaternion norm deviation that is normalized silently.
pub const NORM_WARN: f64 = 1e-3;
/// Quaternion norm deviation that is rejected.
pub const NORM_REJECT: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamps not strictly increasing ({prev} then {next})")]
    Monotonicity { line: usize, prev: i64, next: i64 },
    #[error("line {line}: quaternion norm {norm} too far from 1")]
    Norm { line: usize, norm: f64 },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("section [{section}] is missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("invalid value: {0}")]
    Invalid(String),
}

impl IngestError {
    /// Innermost error, with file context stripped.
    pub fn root(&self) -> &IngestError {
        match self {
            IngestError::InFile { source, .. } => source.root(),
            other => other,
        }
    }

    /// Path of the file involved, if any.
    pub fn path(&self) -> Option<&Path> {
        match self {
            IngestError::Io { path, .. } | IngestError::InFile { path, .. } => Some(path),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, IngestError>;

/// Non-fatal observation made while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        message: message.into(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| IngestError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn as_text(bytes: &[u8]) -> Result<&str> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        parse_err(line, "not valid UTF-8")
    })?;
    if let Some(pos) = text.find(|c: char| !c.is_ascii()) {
        let line = text[..pos].matches('\n').count() + 1;
        return Err(parse_err(line, "non-ASCII character"));
    }
    Ok(text)
}

/// Splits a CSV document into numbered rows after checking the header.
fn csv_rows<'a>(bytes: &'a [u8], header: &str, columns: usize) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let text = as_text(bytes)?;
    let mut lines = text.split('\n');
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(parse_err(1, format!("expected header `{header}`, found `{h}`"))),
        None => return Err(parse_err(1, "empty file")),
    }
    let mut rows = Vec::new();
    let mut ended = false;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            ended = true;
            continue;
        }
        if ended {
            return Err(parse_err(line_no - 1, "blank line inside data"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(parse_err(
                line_no,
                format!("expected {columns} columns, found {}", fields.len()),
            ));
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn parse_i64(line: usize, field: &str, name: &str) -> Result<i64> {
    field
        .parse::<i64>()
        .map_err(|_| parse_err(line, format!("bad integer for {name}: `{field}`")))
}

fn parse_f64(line: usize, field: &str, name: &str) -> Result<f64> {
    let v = field
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad number for {name}: `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value for {name}")));
    }
    Ok(v)
}

fn parse_vec3(line: usize, fields: &[&str], names: [&str; 3]) -> Result<Vector3<f64>> {
    Ok(Vector3::new(
        parse_f64(line, fields[0], names[0])?,
        parse_f64(line, fields[1], names[1])?,
        parse_f64(line, fields[2], names[2])?,
    ))
}

fn check_order(line: usize, prev: Option<i64>, next: i64) -> Result<()> {
    match prev {
        Some(p) if next <= p => Err(IngestError::Monotonicity { line, prev: p, next }),
        _ => Ok(()),
    }
}

/// Parses a pose from `tx,ty,tz,qw,qx,qy,qz`, normalizing the quaternion.
fn parse_pose(line: usize, fields: &[&str], warnings: &mut Vec<LoadWarning>) -> Result<RigidMotion> {
    let t = parse_vec3(line, &fields[0..3], ["tx", "ty", "tz"])?;
    let mut q = [0.0; 4];
    for (k, name) in ["qw", "qx", "qy", "qz"].iter().enumerate() {
        q[k] = parse_f64(line, fields[3 + k], name)?;
    }
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    let deviation = (norm - 1.0).abs();
    if !(deviation <= NORM_REJECT) {
        return Err(IngestError::Norm { line, norm });
    }
    if deviation > NORM_WARN {
        let message = format!("quaternion norm {norm} normalized");
        log::warn!("line {line}: {message}");
        warnings.push(LoadWarning { line, message });
    }
    Ok(RigidMotion::from_wxyz(q, t.into()))
}

fn push_f64(out: &mut String, v: f64) {
    write!(out, "{v}").expect("write to String");
}

fn push_pose(out: &mut String, pose: &RigidMotion) {
    let t = pose.translation();
    let q = pose.quaternion_wxyz();
    for (k, v) in [t.x, t.y, t.z, q[0], q[1], q[2], q[3]].into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        push_f64(out, v);
    }
}

// --- imu.csv ---------------------------------------------------------------

pub fn parse_imu(bytes: &[u8]) -> Result<Vec<ImuSample>> {
    let mut out = Vec::new();
    let mut prev = None;
    for (line, f) in csv_rows(bytes, IMU_HEADER, 8)? {
        let t = parse_i64(line, f[0], "t_ns")?;
        check_order(line, prev, t)?;
        prev = Some(t);
        let gyro = parse_vec3(line, &f[1..4], ["gx", "gy", "gz"])?;
        let accel = parse_vec3(line, &f[4..7], ["ax", "ay", "az"])?;
        let temp_c = if f[7].is_empty() {
            None
        } else {
            Some(parse_f64(line, f[7], "temp_c")?)
        };
        out.push(ImuSample {
            t: Timestamp(t),
            gyro,
            accel,
            temp_c,
        });
    }
    Ok(out)
}

pub fn format_imu(samples: &[ImuSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(IMU_HEADER);
    out.push('\n');
    for s in samples {
        write!(out, "{}", s.t.0).expect("write to String");
        for v in s.gyro.iter().chain(s.accel.iter()) {
            out.push(',');
            push_f64(&mut out, *v);
        }
        out.push(',');
        if let Some(temp) = s.temp_c {
            push_f64(&mut out, temp);
        }
        out.push('\n');
    }
    out
}

pub fn load_imu(path: &Path) -> Result<Vec<ImuSample>> {
    let bytes = read_file(path)?;
    in_file(path, parse_imu(&bytes))
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<()> {
    write_file(path, &format_imu(samples))
}

// --- mocap.csv and trajectories --------------------------------------------

/// Parses a pose stream in the mocap schema; quaternions are normalized.
pub fn parse_trajectory(
    bytes: &[u8],
    parent: Frame,
    child: Frame,
) -> Result<(Trajectory, Vec<LoadWarning>)> {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let mut prev = None;
    for (line, f) in csv_rows(bytes, MOCAP_HEADER, 8)? {
        let t = parse_i64(line, f[0], "t_ns")?;
        check_order(line, prev, t)?;
        prev = Some(t);
        let pose = parse_pose(line, &f[1..8], &mut warnings)?;
        samples.push(PoseSample::new(Timestamp(t), pose));
    }
    let traj = Trajectory::new(parent, child, samples).expect("order checked while parsing");
    Ok((traj, warnings))
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(96 * (traj.len() + 1));
    out.push_str(MOCAP_HEADER);
    out.push('\n');
    for s in traj.samples() {
        write!(out, "{},", s.t.0).expect("write to String");
        push_pose(&mut out, &s.pose);
        out.push('\n');
    }
    out
}

/// Marker-body poses `T_WM`.
pub fn load_mocap(path: &Path) -> Result<(Trajectory, Vec<LoadWarning>)> {
    load_trajectory(path, Frame::W, Frame::M)
}

pub fn load_trajectory(path: &Path, parent: Frame, child: Frame) -> Result<(Trajectory, Vec<LoadWarning>)> {
    let bytes = read_file(path)?;
    in_file(path, parse_trajectory(&bytes, parent, child))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_file(path, &format_trajectory(traj))
}

// --- exposures.csv ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureRecord {
    pub t: Timestamp,
    pub exposure_ns: u64,
    pub lux: Option<f64>,
}

impl ExposureRecord {
    pub fn exposure_s(&self) -> f64 {
        self.exposure_ns as f64 * 1e-9
    }
}

pub fn parse_exposures(bytes: &[u8]) -> Result<Vec<ExposureRecord>> {
    let mut out = Vec::new();
    let mut prev = None;
    for (line, f) in csv_rows(bytes, EXPOSURE_HEADER, 3)? {
        let t = parse_i64(line, f[0], "t_ns")?;
        check_order(line, prev, t)?;
        prev = Some(t);
        let exposure_ns = f[1]
            .parse::<u64>()
            .map_err(|_| parse_err(line, format!("bad exposure_ns `{}` (must be a non-negative integer)", f[1])))?;
        let lux = if f[2].is_empty() {
            None
        } else {
            let v = parse_f64(line, f[2], "lux")?;
            if v < 0.0 {
                return Err(parse_err(line, "negative illuminance"));
            }
            Some(v)
        };
        out.push(ExposureRecord {
            t: Timestamp(t),
            exposure_ns,
            lux,
        });
    }
    Ok(out)
}

pub fn format_exposures(records: &[ExposureRecord]) -> String {
    let mut out = String::new();
    out.push_str(EXPOSURE_HEADER);
    out.push('\n');
    for r in records {
        write!(out, "{},{},", r.t.0, r.exposure_ns).expect("write to String");
        if let Some(l) = r.lux {
            push_f64(&mut out, l);
        }
        out.push('\n');
    }
    out
}

pub fn load_exposures(path: &Path) -> Result<Vec<ExposureRecord>> {
    let bytes = read_file(path)?;
    in_file(path, parse_exposures(&bytes))
}

pub fn write_exposures(path: &Path, records: &[ExposureRecord]) -> Result<()> {
    write_file(path, &format_exposures(records))
}

// --- pairs.csv -------------------------------------------------------------

/// Synchronized marker pose `T_WM` and IMU-to-grid pose `T_IG`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub t: Timestamp,
    pub t_wm: RigidMotion,
    pub t_ig: RigidMotion,
}

pub fn parse_pairs(bytes: &[u8]) -> Result<(Vec<PosePair>, Vec<LoadWarning>)> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    let mut prev = None;
    for (line, f) in csv_rows(bytes, PAIRS_HEADER, 15)? {
        let t = parse_i64(line, f[0], "t_ns")?;
        check_order(line, prev, t)?;
        prev = Some(t);
        let t_wm = parse_pose(line, &f[1..8], &mut warnings)?;
        let t_ig = parse_pose(line, &f[8..15], &mut warnings)?;
        out.push(PosePair {
            t: Timestamp(t),
            t_wm,
            t_ig,
        });
    }
    Ok((out, warnings))
}

pub fn format_pairs(pairs: &[PosePair]) -> String {
    let mut out = String::new();
    out.push_str(PAIRS_HEADER);
    out.push('\n');
    for p in pairs {
        write!(out, "{},", p.t.0).expect("write to String");
        push_pose(&mut out, &p.t_wm);
        out.push(',');
        push_pose(&mut out, &p.t_ig);
        out.push('\n');
    }
    out
}

pub fn load_pairs(path: &Path) -> Result<(Vec<PosePair>, Vec<LoadWarning>)> {
    let bytes = read_file(path)?;
    in_file(path, parse_pairs(&bytes))
}

pub fn write_pairs(path: &Path, pairs: &[PosePair]) -> Result<()> {
    write_file(path, &format_pairs(pairs))
}

// --- INI dialect -----------------------------------------------------------

/// Minimal INI document: `[section]` headers, `key = value` entries,
/// `#` or `;` comment lines. Order is preserved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: Vec<IniSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IniSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<(String, String, usize)>,
}

impl IniSection {
    pub fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    pub fn require(&self, key: &str) -> Result<(&str, usize)> {
        self.get(key).ok_or_else(|| IngestError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let (v, line) = self.require(key)?;
        parse_f64(line, v, key)
    }

    pub fn i64(&self, key: &str) -> Result<i64> {
        let (v, line) = self.require(key)?;
        parse_i64(line, v, key)
    }

    /// Comma-separated list of `N` numbers.
    pub fn f64s<const N: usize>(&self, key: &str) -> Result<[f64; N]> {
        let (v, line) = self.require(key)?;
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        if parts.len() != N {
            return Err(parse_err(line, format!("`{key}` needs {N} values, found {}", parts.len())));
        }
        let mut out = [0.0; N];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = parse_f64(line, p, key)?;
        }
        Ok(out)
    }
}

impl Ini {
    pub fn parse(bytes: &[u8]) -> Result<Ini> {
        let text = as_text(bytes)?;
        let mut sections: Vec<IniSection> = Vec::new();
        for (idx, raw) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(parse_err(line_no, "empty section name"));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(parse_err(line_no, format!("duplicate section [{name}]")));
                }
                sections.push(IniSection {
                    name: name.to_string(),
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "expected `key = value`"))?;
            let section = sections
                .last_mut()
                .ok_or_else(|| parse_err(line_no, "entry before any section"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(parse_err(line_no, "empty key"));
            }
            if section.get(key).is_some() {
                return Err(parse_err(line_no, format!("duplicate key `{key}`")));
            }
            section.entries.push((key.to_string(), value.trim().to_string(), line_no));
        }
        Ok(Ini { sections })
    }

    pub fn section(&self, name: &str) -> Option<&IniSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&IniSection> {
        self.section(name)
            .ok_or_else(|| IngestError::MissingSection(name.to_string()))
    }

    pub fn sections(&self) -> &[IniSection] {
        &self.sections
    }
}

/// 17 significant digits.
pub fn fmt_exact(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| fmt_exact(*v)).collect::<Vec<_>>().join(", ")
}

pub fn write_matrix(out: &mut String, name: &str, m: &Matrix3<f64>) {
    writeln!(out, "[{name}]").unwrap();
    for r in 0..3 {
        writeln!(out, "row{r} = {}", fmt_list(&[m[(r, 0)], m[(r, 1)], m[(r, 2)]])).unwrap();
    }
}

pub fn read_matrix(ini: &Ini, name: &str) -> Result<Matrix3<f64>> {
    let s = ini.require(name)?;
    let mut m = Matrix3::zeros();
    for r in 0..3 {
        let row = s.f64s::<3>(&format!("row{r}"))?;
        for c in 0..3 {
            m[(r, c)] = row[c];
        }
    }
    Ok(m)
}

pub fn write_vector(out: &mut String, name: &str, v: &Vector3<f64>) {
    writeln!(out, "[{name}]\nvalue = {}", fmt_list(v.as_slice())).unwrap();
}

pub fn read_vector(ini: &Ini, name: &str) -> Result<Vector3<f64>> {
    Ok(Vector3::from(ini.require(name)?.f64s::<3>("value")?))
}

pub fn write_pose_section(out: &mut String, name: &str, pose: &RigidMotion) {
    let t = pose.translation();
    writeln!(out, "[{name}]").unwrap();
    writeln!(out, "translation = {}", fmt_list(t.as_slice())).unwrap();
    writeln!(out, "rotation_wxyz = {}", fmt_list(&pose.quaternion_wxyz())).unwrap();
}

pub fn read_pose_section(ini: &Ini, name: &str) -> Result<RigidMotion> {
    let s = ini.require(name)?;
    let t = s.f64s::<3>("translation")?;
    let q = s.f64s::<4>("rotation_wxyz")?;
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= NORM_REJECT) {
        let (_, line) = s.require("rotation_wxyz")?;
        return Err(IngestError::Norm { line, norm });
    }
    Ok(RigidMotion::from_wxyz(q, t))
}

// --- calib.txt -------------------------------------------------------------

/// Noise densities of one sensor; zero means "not yet identified".
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorNoise {
    pub sigma_w: f64,
    pub sigma_b: f64,
}

/// Everything the pipeline accumulates in `calib.txt`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationFile {
    pub intrinsics: ImuIntrinsics,
    /// MoCap clock minus IMU clock for the same physical instant.
    pub mocap_imu_shift_ns: i64,
    pub camera_imu_shift_ns: i64,
    pub t_mi: RigidMotion,
    pub t_wg: RigidMotion,
    pub accel_noise: SensorNoise,
    pub gyro_noise: SensorNoise,
    /// Optional `[exposure]` section.
    pub exposure: Option<ExposureModel>,
}

const MAX_SHIFT_NS: i64 = 1_000_000_000;

impl CalibrationFile {
    pub fn validate(&self) -> Result<()> {
        let i = &self.intrinsics;
        let finite = i.m_a.iter().chain(i.m_g.iter()).chain(i.b_a.iter()).chain(i.b_g.iter()).all(|v| v.is_finite())
            && [self.t_mi, self.t_wg]
                .iter()
                .all(|p| p.translation().iter().chain(p.quaternion_wxyz().iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(IngestError::Invalid("non-finite calibration value".into()));
        }
        for (name, s) in [("mocap_imu_ns", self.mocap_imu_shift_ns), ("camera_imu_ns", self.camera_imu_shift_ns)] {
            if s.unsigned_abs() >= MAX_SHIFT_NS as u64 {
                return Err(IngestError::Invalid(format!("{name} = {s} exceeds 1 s")));
            }
        }
        for v in [self.accel_noise, self.gyro_noise] {
            if !(v.sigma_w >= 0.0 && v.sigma_b >= 0.0 && v.sigma_w.is_finite() && v.sigma_b.is_finite()) {
                return Err(IngestError::Invalid("noise densities must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# vicalib calibration\n");
        let i = &self.intrinsics;
        write_matrix(&mut out, "M_a", &i.m_a);
        write_matrix(&mut out, "M_g", &i.m_g);
        write_vector(&mut out, "b_a", &i.b_a);
        write_vector(&mut out, "b_g", &i.b_g);
        write_pose_section(&mut out, "T_MI", &self.t_mi);
        write_pose_section(&mut out, "T_WG", &self.t_wg);
        writeln!(out, "[time_shift]").unwrap();
        writeln!(out, "mocap_imu_ns = {}", self.mocap_imu_shift_ns).unwrap();
        writeln!(out, "camera_imu_ns = {}", self.camera_imu_shift_ns).unwrap();
        writeln!(out, "[noise]").unwrap();
        writeln!(out, "accel_sigma_w = {}", fmt_exact(self.accel_noise.sigma_w)).unwrap();
        writeln!(out, "accel_sigma_b = {}", fmt_exact(self.accel_noise.sigma_b)).unwrap();
        writeln!(out, "gyro_sigma_w = {}", fmt_exact(self.gyro_noise.sigma_w)).unwrap();
        writeln!(out, "gyro_sigma_b = {}", fmt_exact(self.gyro_noise.sigma_b)).unwrap();
        if let Some(e) = &self.exposure {
            writeln!(out, "[exposure]").unwrap();
            writeln!(out, "k = {}", fmt_exact(e.k)).unwrap();
            writeln!(out, "t_min_s = {}", fmt_exact(e.t_min)).unwrap();
            writeln!(out, "t_max_s = {}", fmt_exact(e.t_max)).unwrap();
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<CalibrationFile> {
        let ini = Ini::parse(bytes)?;
        let intrinsics = ImuIntrinsics {
            m_a: read_matrix(&ini, "M_a")?,
            m_g: read_matrix(&ini, "M_g")?,
            b_a: read_vector(&ini, "b_a")?,
            b_g: read_vector(&ini, "b_g")?,
        };
        let t_mi = read_pose_section(&ini, "T_MI")?;
        let t_wg = read_pose_section(&ini, "T_WG")?;
        let shift = ini.require("time_shift")?;
        let noise = ini.require("noise")?;
        let exposure = match ini.section("exposure") {
            Some(s) => Some(
                ExposureModel::new(s.f64("k")?, s.f64("t_min_s")?, s.f64("t_max_s")?)
                    .map_err(|e| IngestError::Invalid(e.to_string()))?,
            ),
            None => None,
        };
        let calib = CalibrationFile {
            intrinsics,
            mocap_imu_shift_ns: shift.i64("mocap_imu_ns")?,
            camera_imu_shift_ns: shift.i64("camera_imu_ns")?,
            t_mi,
            t_wg,
            accel_noise: SensorNoise {
                sigma_w: noise.f64("accel_sigma_w")?,
                sigma_b: noise.f64("accel_sigma_b")?,
            },
            gyro_noise: SensorNoise {
                sigma_w: noise.f64("gyro_sigma_w")?,
                sigma_b: noise.f64("gyro_sigma_b")?,
            },
            exposure,
        };
        calib.validate()?;
        Ok(calib)
    }
}

pub fn write_calibration(calib: &CalibrationFile, path: &Path) -> Result<()> {
    calib.validate()?;
    write_file(path, &calib.to_text())
}

pub fn load_calibration(path: &Path) -> Result<CalibrationFile> {
    let bytes = read_file(path)?;
    in_file(path, CalibrationFile::parse(&bytes))
}

/// Loads `path` if it exists, otherwise returns the identity calibration.
pub fn load_or_default_calibration(path: &Path) -> Result<CalibrationFile> {
    if path.exists() {
        load_calibration(path)
    } else {
        Ok(CalibrationFile::default())
    }
}

// --- dataset directory -----------------------------------------------------

/// A directory following the dataset layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDir {
    pub path: PathBuf,
}

impl DatasetDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn imu(&self) -> PathBuf {
        self.path.join("imu.csv")
    }

    pub fn mocap(&self) -> PathBuf {
        self.path.join("mocap.csv")
    }

    pub fn exposures(&self) -> PathBuf {
        self.path.join("exposures.csv")
    }

    pub fn calib(&self) -> PathBuf {
        self.path.join("calib.txt")
    }

    pub fn gt(&self) -> PathBuf {
        self.path.join("gt.csv")
    }

    pub fn pairs(&self) -> PathBuf {
        self.path.join("pairs.csv")
    }

    pub fn truth(&self) -> PathBuf {
        self.path.join("truth.txt")
    }
}
