//! Synthetic sensor rig: a sum-of-sinusoids IMU trajectory with closed-form
//! derivatives, and corrupted IMU, MoCap, exposure, pose-pair and vignette
//! streams with known parameters.
//!
//! Randomness comes from `ChaCha20Rng` seeded with the rig seed; every channel
//! draws from its own stream (`set_stream`, see [`Channel`]) so adding samples
//! to one channel never shifts another.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::{Frame, PoseSample, RigidMotion, Timestamp, Trajectory};
use crate::imucal::{gravity_vector, ImuIntrinsics, ImuSample};
use crate::ingest::{
    self, read_matrix, read_pose_section, read_vector, CalibrationFile, DatasetDir, ExposureRecord, Ini,
    IniSection, IngestError, PosePair, SensorNoise,
};
use crate::photometric::{
    self, radial_vignette, render_image, CalibrationView, Correspondence, ExposureModel, Image, PhotometricError,
    ViewSet,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Photometric(#[from] PhotometricError),
    #[error("rig config: {0}")]
    Config(String),
}

type Result<T> = std::result::Result<T, SynthError>;

fn config_err(msg: impl Into<String>) -> SynthError {
    SynthError::Config(msg.into())
}

/// Independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Trajectory = 1,
    GyroWhite = 2,
    GyroBias = 3,
    AccelWhite = 4,
    AccelBias = 5,
    MocapNoise = 6,
    Glitches = 7,
    PairNoise = 8,
    Texture = 9,
    ImageNoise = 10,
    Lux = 11,
}

pub fn channel_rng(seed: u64, channel: Channel) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    rng
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal3(rng: &mut ChaCha20Rng) -> Vector3<f64> {
    Vector3::new(normal(rng), normal(rng), normal(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

/// `offset + rate * t + sum a sin(2 pi f t + phase)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AxisSignal {
    pub offset: f64,
    pub rate: f64,
    pub harmonics: Vec<Harmonic>,
}

impl AxisSignal {
    pub fn constant(offset: f64) -> Self {
        Self {
            offset,
            ..Default::default()
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.offset
            + self.rate * t
            + self
                .harmonics
                .iter()
                .map(|h| h.amplitude * (TAU * h.frequency_hz * t + h.phase).sin())
                .sum::<f64>()
    }

    pub fn d1(&self, t: f64) -> f64 {
        self.rate
            + self
                .harmonics
                .iter()
                .map(|h| {
                    let w = TAU * h.frequency_hz;
                    h.amplitude * w * (w * t + h.phase).cos()
                })
                .sum::<f64>()
    }

    pub fn d2(&self, t: f64) -> f64 {
        -self
            .harmonics
            .iter()
            .map(|h| {
                let w = TAU * h.frequency_hz;
                h.amplitude * w * w * (w * t + h.phase).sin()
            })
            .sum::<f64>()
    }

    /// `offset rate a1 f1 p1 a2 f2 p2 ...`, separated by commas or spaces.
    fn parse(text: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| format!("bad number `{s}`")))
            .collect::<std::result::Result<_, _>>()?;
        if v.len() < 2 || !(v.len() - 2).is_multiple_of(3) || v.iter().any(|x| !x.is_finite()) {
            return Err("expected `offset rate` followed by (amplitude frequency phase) triples".into());
        }
        Ok(Self {
            offset: v[0],
            rate: v[1],
            harmonics: v[2..]
                .chunks(3)
                .map(|c| Harmonic {
                    amplitude: c[0],
                    frequency_hz: c[1],
                    phase: c[2],
                })
                .collect(),
        })
    }
}

/// Position of `I` in `W` per axis, and ZYX Euler angles (yaw, pitch, roll)
/// of `R_WI = Rz(yaw) Ry(pitch) Rx(roll)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySpec {
    pub translation: [AxisSignal; 3],
    pub euler: [AxisSignal; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTrajectory {
    pub harmonics: usize,
    pub max_translation_m: f64,
    pub max_rotation_deg: f64,
    pub min_frequency_hz: f64,
    pub max_frequency_hz: f64,
}

impl Default for RandomTrajectory {
    fn default() -> Self {
        Self {
            harmonics: 4,
            max_translation_m: 1.0,
            max_rotation_deg: 60.0,
            min_frequency_hz: 0.2,
            max_frequency_hz: 1.5,
        }
    }
}

impl TrajectorySpec {
    pub fn stationary() -> Self {
        Self::default()
    }

    pub fn spin_z(rate: f64) -> Self {
        let mut s = Self::default();
        s.euler[0].rate = rate;
        s
    }

    /// Harmonic amplitudes sum to at most the configured maxima; pitch keeps
    /// 80 % of the rotation budget to stay clear of the Euler singularity.
    pub fn random(params: &RandomTrajectory, rng: &mut ChaCha20Rng) -> Self {
        let axis = |max: f64, rng: &mut ChaCha20Rng| {
            let k = params.harmonics.max(1);
            AxisSignal {
                offset: 0.0,
                rate: 0.0,
                harmonics: (0..k)
                    .map(|_| Harmonic {
                        amplitude: max / k as f64 * rng.random_range(0.5..1.0),
                        frequency_hz: rng.random_range(params.min_frequency_hz..=params.max_frequency_hz),
                        phase: rng.random_range(0.0..TAU),
                    })
                    .collect(),
            }
        };
        let rot = params.max_rotation_deg.to_radians();
        Self {
            translation: [
                axis(params.max_translation_m, rng),
                axis(params.max_translation_m, rng),
                axis(params.max_translation_m, rng),
            ],
            euler: [axis(rot, rng), axis(0.8 * rot, rng), axis(rot, rng)],
        }
    }
}

/// Closed-form trajectory plus the rig transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: TrajectorySpec,
    pub gravity: Vector3<f64>,
    pub t_mi: RigidMotion,
    pub t_wg: RigidMotion,
}

impl GroundTruth {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.spec.translation[i].value(t))
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.spec.translation[i].d1(t))
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.spec.translation[i].d2(t))
    }

    pub fn rotation(&self, t: f64) -> UnitQuaternion<f64> {
        let [yaw, pitch, roll] = &self.spec.euler;
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw.value(t))
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch.value(t))
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll.value(t))
    }

    /// `T_WI(t)`.
    pub fn pose(&self, t: f64) -> RigidMotion {
        RigidMotion::new(self.rotation(t), self.position(t))
    }

    /// `T_WM(t) = T_WI(t) T_MI^-1`.
    pub fn marker_pose(&self, t: f64) -> RigidMotion {
        self.pose(t) * self.t_mi.inverse()
    }

    /// Body-frame angular velocity from the Euler-angle rates.
    pub fn omega(&self, t: f64) -> Vector3<f64> {
        let [yaw, pitch, roll] = &self.spec.euler;
        let (th, ph) = (pitch.value(t), roll.value(t));
        let (dpsi, dth, dph) = (yaw.d1(t), pitch.d1(t), roll.d1(t));
        Vector3::new(
            dph - dpsi * th.sin(),
            dth * ph.cos() + dpsi * ph.sin() * th.cos(),
            -dth * ph.sin() + dpsi * ph.cos() * th.cos(),
        )
    }

    /// `f = R^T (p'' - g)`.
    pub fn specific_force(&self, t: f64) -> Vector3<f64> {
        self.rotation(t).inverse() * (self.acceleration(t) - self.gravity)
    }

    /// Arc length of the position curve over `[t0, t1]` by composite Simpson
    /// quadrature of the speed.
    pub fn arc_length(&self, t0: f64, t1: f64) -> f64 {
        let n = (((t1 - t0) * 2000.0).ceil() as usize).max(2) & !1;
        let h = (t1 - t0) / n as f64;
        let speed = |i: usize| self.velocity(t0 + i as f64 * h).norm();
        let mut s = speed(0) + speed(n);
        for i in 1..n {
            s += speed(i) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MocapNoise {
    /// Per-axis std of the right-multiplied rotation perturbation.
    pub sigma_rot_rad: f64,
    pub sigma_trans_m: f64,
    /// Probability that a sample receives an isolated position spike.
    pub glitch_rate: f64,
    pub glitch_magnitude_m: f64,
}

impl Default for MocapNoise {
    fn default() -> Self {
        Self {
            sigma_rot_rad: 0.1f64.to_radians(),
            sigma_trans_m: 5e-4,
            glitch_rate: 0.0,
            glitch_magnitude_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairsConfig {
    pub count: usize,
    pub sigma_rot_rad: f64,
    pub sigma_trans_m: f64,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            count: 200,
            sigma_rot_rad: 0.2f64.to_radians(),
            sigma_trans_m: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub texture_width: usize,
    pub texture_height: usize,
    pub views: usize,
    pub vignette_strength: f64,
    /// Relative std of multiplicative image noise.
    pub image_noise: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            texture_width: 128,
            texture_height: 96,
            views: 10,
            vignette_strength: 0.6,
            image_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureConfig {
    pub model: ExposureModel,
    pub lux_min: f64,
    pub lux_max: f64,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        Self {
            model: ExposureModel {
                k: 0.5,
                t_min: 1e-4,
                t_max: 0.02,
            },
            lux_min: 5.0,
            lux_max: 20_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub imu_hz: f64,
    pub mocap_hz: f64,
    pub camera_hz: f64,
    /// MoCap clock minus IMU clock.
    pub mocap_offset_ns: i64,
    /// True time of the first MoCap sample; the IMU starts at 0.
    pub mocap_start_s: f64,
    /// True-time interval whose MoCap rows are dropped (room-style coverage).
    pub mocap_gap: Option<(f64, f64)>,
    pub trajectory: TrajectorySpec,
    pub intrinsics: ImuIntrinsics,
    pub accel_noise: SensorNoise,
    pub gyro_noise: SensorNoise,
    pub mocap_noise: MocapNoise,
    pub t_mi: RigidMotion,
    pub t_wg: RigidMotion,
    pub gravity: Vector3<f64>,
    pub pairs: PairsConfig,
    pub camera: CameraConfig,
    pub exposure: ExposureConfig,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            duration_s: 60.0,
            imu_hz: 200.0,
            mocap_hz: 120.0,
            camera_hz: 20.0,
            mocap_offset_ns: 0,
            mocap_start_s: 0.0,
            mocap_gap: None,
            trajectory: TrajectorySpec::random(&RandomTrajectory::default(), &mut channel_rng(42, Channel::Trajectory)),
            intrinsics: ImuIntrinsics::identity(),
            accel_noise: SensorNoise {
                sigma_w: 1.4e-3,
                sigma_b: 8.6e-5,
            },
            gyro_noise: SensorNoise {
                sigma_w: 8.0e-5,
                sigma_b: 2.2e-6,
            },
            mocap_noise: MocapNoise::default(),
            t_mi: RigidMotion::identity(),
            t_wg: RigidMotion::identity(),
            gravity: gravity_vector(),
            pairs: PairsConfig::default(),
            camera: CameraConfig::default(),
            exposure: ExposureConfig::default(),
        }
    }
}

fn opt_f64(s: Option<&IniSection>, key: &str, default: f64) -> Result<f64> {
    match s {
        Some(s) if s.get(key).is_some() => Ok(s.f64(key)?),
        _ => Ok(default),
    }
}

fn opt_i64(s: Option<&IniSection>, key: &str, default: i64) -> Result<i64> {
    match s {
        Some(s) if s.get(key).is_some() => Ok(s.i64(key)?),
        _ => Ok(default),
    }
}

fn opt_usize(s: Option<&IniSection>, key: &str, default: usize) -> Result<usize> {
    let v = opt_i64(s, key, default as i64)?;
    usize::try_from(v).map_err(|_| config_err(format!("{key} = {v} must be non-negative")))
}

impl RigConfig {
    /// Reads `rig.txt`; every section and key is optional and falls back to
    /// [`RigConfig::default`].
    ///
    /// ```text
    /// [rig]         seed, duration_s, imu_hz, mocap_hz, camera_hz,
    ///               mocap_offset_ns, mocap_start_s, mocap_gap_s (from, to)
    /// [trajectory]  kind = random | static | spin | explicit
    ///               random: harmonics, max_translation_m, max_rotation_deg,
    ///                       min_frequency_hz, max_frequency_hz
    ///               spin: rate_rad_s
    ///               explicit: tx ty tz yaw pitch roll = offset rate (a f phase)*
    /// [M_a] [M_g] [b_a] [b_g] [T_MI] [T_WG]   as in calib.txt
    /// [noise]       accel_sigma_w, accel_sigma_b, gyro_sigma_w, gyro_sigma_b
    /// [mocap]       sigma_rot_deg, sigma_trans_m, glitch_rate, glitch_magnitude_m
    /// [pairs]       count, sigma_rot_deg, sigma_trans_m
    /// [camera]      width, height, texture_width, texture_height, views,
    ///               vignette_strength, image_noise
    /// [exposure]    k, t_min_s, t_max_s, lux_min, lux_max
    /// [gravity]     value
    /// ```
    pub fn parse(bytes: &[u8], seed_override: Option<u64>) -> Result<RigConfig> {
        let ini = Ini::parse(bytes)?;
        let d = RigConfig::default();
        let rig = ini.section("rig");
        let seed = match seed_override {
            Some(s) => s,
            None => {
                let s = opt_i64(rig, "seed", d.seed as i64)?;
                u64::try_from(s).map_err(|_| config_err("seed must be non-negative"))?
            }
        };
        let mocap_gap = match rig.and_then(|s| s.get("mocap_gap_s")) {
            Some(_) => {
                let [a, b] = rig.unwrap().f64s::<2>("mocap_gap_s")?;
                Some((a, b))
            }
            None => None,
        };

        let tr = ini.section("trajectory");
        let kind = tr.and_then(|s| s.get("kind")).map_or("random", |(v, _)| v);
        let trajectory = match kind {
            "random" => {
                let r = RandomTrajectory::default();
                let params = RandomTrajectory {
                    harmonics: opt_usize(tr, "harmonics", r.harmonics)?,
                    max_translation_m: opt_f64(tr, "max_translation_m", r.max_translation_m)?,
                    max_rotation_deg: opt_f64(tr, "max_rotation_deg", r.max_rotation_deg)?,
                    min_frequency_hz: opt_f64(tr, "min_frequency_hz", r.min_frequency_hz)?,
                    max_frequency_hz: opt_f64(tr, "max_frequency_hz", r.max_frequency_hz)?,
                };
                if !(params.min_frequency_hz > 0.0 && params.min_frequency_hz <= params.max_frequency_hz)
                    || !(params.max_rotation_deg >= 0.0 && params.max_rotation_deg <= 90.0)
                    || !(params.max_translation_m >= 0.0 && params.max_translation_m.is_finite())
                {
                    return Err(config_err("random trajectory bounds out of range"));
                }
                TrajectorySpec::random(&params, &mut channel_rng(seed, Channel::Trajectory))
            }
            "static" => TrajectorySpec::stationary(),
            "spin" => TrajectorySpec::spin_z(opt_f64(tr, "rate_rad_s", 1.0)?),
            "explicit" => {
                let s = tr.unwrap();
                let axis = |key: &str| -> Result<AxisSignal> {
                    match s.get(key) {
                        Some((v, line)) => {
                            AxisSignal::parse(v).map_err(|m| config_err(format!("line {line}: {key}: {m}")))
                        }
                        None => Ok(AxisSignal::default()),
                    }
                };
                TrajectorySpec {
                    translation: [axis("tx")?, axis("ty")?, axis("tz")?],
                    euler: [axis("yaw")?, axis("pitch")?, axis("roll")?],
                }
            }
            other => return Err(config_err(format!("unknown trajectory kind `{other}`"))),
        };

        let intrinsics = ImuIntrinsics {
            m_a: if ini.section("M_a").is_some() { read_matrix(&ini, "M_a")? } else { Matrix3::identity() },
            m_g: if ini.section("M_g").is_some() { read_matrix(&ini, "M_g")? } else { Matrix3::identity() },
            b_a: if ini.section("b_a").is_some() { read_vector(&ini, "b_a")? } else { Vector3::zeros() },
            b_g: if ini.section("b_g").is_some() { read_vector(&ini, "b_g")? } else { Vector3::zeros() },
        };
        intrinsics
            .validate()
            .map_err(|e| config_err(format!("intrinsics: {e}")))?;
        let pose = |name: &str| -> Result<RigidMotion> {
            if ini.section(name).is_some() {
                Ok(read_pose_section(&ini, name)?)
            } else {
                Ok(RigidMotion::identity())
            }
        };
        let noise = ini.section("noise");
        let mocap = ini.section("mocap");
        let pairs = ini.section("pairs");
        let cam = ini.section("camera");
        let exp = ini.section("exposure");
        let de = d.exposure;
        let dc = d.camera;
        let cfg = RigConfig {
            seed,
            duration_s: opt_f64(rig, "duration_s", d.duration_s)?,
            imu_hz: opt_f64(rig, "imu_hz", d.imu_hz)?,
            mocap_hz: opt_f64(rig, "mocap_hz", d.mocap_hz)?,
            camera_hz: opt_f64(rig, "camera_hz", d.camera_hz)?,
            mocap_offset_ns: opt_i64(rig, "mocap_offset_ns", d.mocap_offset_ns)?,
            mocap_start_s: opt_f64(rig, "mocap_start_s", d.mocap_start_s)?,
            mocap_gap,
            trajectory,
            intrinsics,
            accel_noise: SensorNoise {
                sigma_w: opt_f64(noise, "accel_sigma_w", d.accel_noise.sigma_w)?,
                sigma_b: opt_f64(noise, "accel_sigma_b", d.accel_noise.sigma_b)?,
            },
            gyro_noise: SensorNoise {
                sigma_w: opt_f64(noise, "gyro_sigma_w", d.gyro_noise.sigma_w)?,
                sigma_b: opt_f64(noise, "gyro_sigma_b", d.gyro_noise.sigma_b)?,
            },
            mocap_noise: MocapNoise {
                sigma_rot_rad: opt_f64(mocap, "sigma_rot_deg", d.mocap_noise.sigma_rot_rad.to_degrees())?.to_radians(),
                sigma_trans_m: opt_f64(mocap, "sigma_trans_m", d.mocap_noise.sigma_trans_m)?,
                glitch_rate: opt_f64(mocap, "glitch_rate", d.mocap_noise.glitch_rate)?,
                glitch_magnitude_m: opt_f64(mocap, "glitch_magnitude_m", d.mocap_noise.glitch_magnitude_m)?,
            },
            t_mi: pose("T_MI")?,
            t_wg: pose("T_WG")?,
            gravity: if ini.section("gravity").is_some() { read_vector(&ini, "gravity")? } else { d.gravity },
            pairs: PairsConfig {
                count: opt_usize(pairs, "count", d.pairs.count)?,
                sigma_rot_rad: opt_f64(pairs, "sigma_rot_deg", d.pairs.sigma_rot_rad.to_degrees())?.to_radians(),
                sigma_trans_m: opt_f64(pairs, "sigma_trans_m", d.pairs.sigma_trans_m)?,
            },
            camera: CameraConfig {
                width: opt_usize(cam, "width", dc.width)?,
                height: opt_usize(cam, "height", dc.height)?,
                texture_width: opt_usize(cam, "texture_width", dc.texture_width)?,
                texture_height: opt_usize(cam, "texture_height", dc.texture_height)?,
                views: opt_usize(cam, "views", dc.views)?,
                vignette_strength: opt_f64(cam, "vignette_strength", dc.vignette_strength)?,
                image_noise: opt_f64(cam, "image_noise", dc.image_noise)?,
            },
            exposure: ExposureConfig {
                model: ExposureModel::new(
                    opt_f64(exp, "k", de.model.k)?,
                    opt_f64(exp, "t_min_s", de.model.t_min)?,
                    opt_f64(exp, "t_max_s", de.model.t_max)?,
                )?,
                lux_min: opt_f64(exp, "lux_min", de.lux_min)?,
                lux_max: opt_f64(exp, "lux_max", de.lux_max)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("imu_hz", self.imu_hz),
            ("mocap_hz", self.mocap_hz),
            ("camera_hz", self.camera_hz),
            ("lux_min", self.exposure.lux_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.exposure.lux_max >= self.exposure.lux_min) || !self.exposure.lux_max.is_finite() {
            return Err(config_err("lux_max must be at least lux_min"));
        }
        let non_negative = [
            ("accel_sigma_w", self.accel_noise.sigma_w),
            ("accel_sigma_b", self.accel_noise.sigma_b),
            ("gyro_sigma_w", self.gyro_noise.sigma_w),
            ("gyro_sigma_b", self.gyro_noise.sigma_b),
            ("mocap sigma_rot", self.mocap_noise.sigma_rot_rad),
            ("mocap sigma_trans_m", self.mocap_noise.sigma_trans_m),
            ("pairs sigma_rot", self.pairs.sigma_rot_rad),
            ("pairs sigma_trans_m", self.pairs.sigma_trans_m),
            ("image_noise", self.camera.image_noise),
            ("vignette_strength", self.camera.vignette_strength),
            ("mocap_start_s", self.mocap_start_s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if !(0.0..0.5).contains(&self.mocap_noise.glitch_rate) {
            return Err(config_err("glitch_rate must be in [0, 0.5)"));
        }
        if self.camera.vignette_strength >= 1.0 {
            return Err(config_err("vignette_strength must be below 1"));
        }
        let c = &self.camera;
        if c.width == 0 || c.height == 0 || c.width > 4096 || c.height > 4096 {
            return Err(config_err("camera size out of range"));
        }
        if c.texture_width <= c.width || c.texture_height <= c.height || c.texture_width > 8192 || c.texture_height > 8192 {
            return Err(config_err("texture must be larger than the image (and at most 8192)"));
        }
        if self.mocap_offset_ns.unsigned_abs() >= 1_000_000_000 {
            return Err(config_err("mocap_offset_ns must be below 1 s in magnitude"));
        }
        if self.duration_s * self.imu_hz.max(self.mocap_hz) > 5e7 {
            return Err(config_err("sequence too long"));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            spec: self.trajectory.clone(),
            gravity: self.gravity,
            t_mi: self.t_mi,
            t_wg: self.t_wg,
        }
    }

    /// The parameters a perfect pipeline would recover.
    pub fn truth(&self) -> CalibrationFile {
        CalibrationFile {
            intrinsics: self.intrinsics,
            mocap_imu_shift_ns: self.mocap_offset_ns,
            camera_imu_shift_ns: 0,
            t_mi: self.t_mi,
            t_wg: self.t_wg,
            accel_noise: self.accel_noise,
            gyro_noise: self.gyro_noise,
            exposure: Some(self.exposure.model),
        }
    }
}

/// `n` stamps at `hz` starting at `start_s`, rounded to nanoseconds.
fn stamps(start_s: f64, end_s: f64, hz: f64) -> Vec<i64> {
    let start = (start_s * 1e9).round() as i64;
    let end = (end_s * 1e9).round() as i64;
    let mut out = Vec::new();
    let mut i: i64 = 0;
    loop {
        let t = start + (i as f64 * 1e9 / hz).round() as i64;
        if t > end {
            break;
        }
        out.push(t);
        i += 1;
    }
    out
}

fn secs(ns: i64) -> f64 {
    ns as f64 * 1e-9
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuStreams {
    /// What the sensor reports: noisy, biased, through the inverse intrinsics.
    pub raw: Vec<ImuSample>,
    /// Analytic `(omega, f)` at the same stamps.
    pub clean: Vec<ImuSample>,
}

/// Clean signals plus white noise (`sigma_w / sqrt(tau0)` per sample) and a
/// random-walk bias (`sigma_b * sqrt(tau0)` per step), then inverse intrinsics.
pub fn sample_imu(gt: &GroundTruth, config: &RigConfig) -> ImuStreams {
    let tau0 = 1.0 / config.imu_hz;
    let mut gw = channel_rng(config.seed, Channel::GyroWhite);
    let mut gb = channel_rng(config.seed, Channel::GyroBias);
    let mut aw = channel_rng(config.seed, Channel::AccelWhite);
    let mut ab = channel_rng(config.seed, Channel::AccelBias);
    let (g_white, g_step) = (config.gyro_noise.sigma_w / tau0.sqrt(), config.gyro_noise.sigma_b * tau0.sqrt());
    let (a_white, a_step) = (config.accel_noise.sigma_w / tau0.sqrt(), config.accel_noise.sigma_b * tau0.sqrt());
    let mut g_bias = Vector3::zeros();
    let mut a_bias = Vector3::zeros();
    let mut raw = Vec::new();
    let mut clean = Vec::new();
    for t in stamps(0.0, config.duration_s, config.imu_hz) {
        let ts = secs(t);
        let c = ImuSample::new(Timestamp(t), gt.omega(ts), gt.specific_force(ts));
        let mut noisy = c;
        if g_white > 0.0 || g_step > 0.0 {
            noisy.gyro += g_bias + normal3(&mut gw) * g_white;
            g_bias += normal3(&mut gb) * g_step;
        }
        if a_white > 0.0 || a_step > 0.0 {
            noisy.accel += a_bias + normal3(&mut aw) * a_white;
            a_bias += normal3(&mut ab) * a_step;
        }
        raw.push(
            config
                .intrinsics
                .invert(&noisy)
                .expect("intrinsics validated as invertible"),
        );
        clean.push(c);
    }
    ImuStreams { raw, clean }
}

fn perturb(pose: RigidMotion, rng: &mut ChaCha20Rng, sigma_rot: f64, sigma_trans: f64) -> RigidMotion {
    if sigma_rot == 0.0 && sigma_trans == 0.0 {
        return pose;
    }
    let dr = normal3(rng) * sigma_rot;
    let dt = normal3(rng) * sigma_trans;
    RigidMotion::new(
        pose.rotation() * crate::geometry::so3_exp(&dr),
        pose.translation() + dt,
    )
}

/// True times (IMU clock) of the MoCap samples after the coverage gap.
pub fn mocap_true_times(config: &RigConfig) -> Vec<i64> {
    stamps(config.mocap_start_s, config.duration_s, config.mocap_hz)
        .into_iter()
        .filter(|&t| match config.mocap_gap {
            Some((a, b)) => !(secs(t) > a && secs(t) < b),
            None => true,
        })
        .collect()
}

/// MoCap stream `T_WM`, stamped `true time + offset`, with pose noise and
/// optional isolated position spikes.
pub fn sample_mocap(gt: &GroundTruth, config: &RigConfig) -> Trajectory {
    let mut noise = channel_rng(config.seed, Channel::MocapNoise);
    let mut glitch = channel_rng(config.seed, Channel::Glitches);
    let n = &config.mocap_noise;
    let mut previous_glitched = false;
    let samples = mocap_true_times(config)
        .into_iter()
        .map(|t| {
            let mut pose = perturb(gt.marker_pose(secs(t)), &mut noise, n.sigma_rot_rad, n.sigma_trans_m);
            let draw: f64 = glitch.random();
            let axis = glitch.random_range(0..3usize);
            let sign = if glitch.random::<bool>() { 1.0 } else { -1.0 };
            if n.glitch_rate > 0.0 && draw < n.glitch_rate && !previous_glitched {
                let mut p = *pose.translation();
                p[axis] += sign * n.glitch_magnitude_m;
                pose = RigidMotion::new(*pose.rotation(), p);
                previous_glitched = true;
            } else {
                previous_glitched = false;
            }
            PoseSample::new(Timestamp(t + config.mocap_offset_ns), pose)
        })
        .collect();
    Trajectory::new(Frame::W, Frame::M, samples).expect("stamps strictly increase")
}

/// True `T_WI` at the MoCap sample times, on the IMU clock.
pub fn ground_truth_trajectory(gt: &GroundTruth, config: &RigConfig) -> Trajectory {
    let samples = mocap_true_times(config)
        .into_iter()
        .map(|t| PoseSample::new(Timestamp(t), gt.pose(secs(t))))
        .collect();
    Trajectory::new(Frame::W, Frame::I, samples).expect("stamps strictly increase")
}

/// `count` synchronized `(T_WM, T_IG)` pairs at camera frames spread over the
/// sequence; `T_WM` carries MoCap noise and `T_IG` the pair noise.
pub fn sample_pairs(gt: &GroundTruth, config: &RigConfig) -> Vec<PosePair> {
    let frames = stamps(0.0, config.duration_s, config.camera_hz);
    let count = config.pairs.count.min(frames.len());
    if count == 0 {
        return Vec::new();
    }
    let mut rng = channel_rng(config.seed, Channel::PairNoise);
    let stride = frames.len() as f64 / count as f64;
    (0..count)
        .map(|k| {
            let t = frames[(k as f64 * stride) as usize];
            let ts = secs(t);
            let t_wm = perturb(
                gt.marker_pose(ts),
                &mut rng,
                config.mocap_noise.sigma_rot_rad,
                config.mocap_noise.sigma_trans_m,
            );
            let t_ig = perturb(
                gt.pose(ts).inverse() * gt.t_wg,
                &mut rng,
                config.pairs.sigma_rot_rad,
                config.pairs.sigma_trans_m,
            );
            PosePair {
                t: Timestamp(t),
                t_wm,
                t_ig,
            }
        })
        .collect()
}

/// Camera-rate exposure log: log-uniform illuminance, exposure from the
/// clamped inverse-proportional law, quantized to nanoseconds.
pub fn sample_exposures(config: &RigConfig) -> Vec<ExposureRecord> {
    let mut rng = channel_rng(config.seed, Channel::Lux);
    let (lo, hi) = (config.exposure.lux_min.ln(), config.exposure.lux_max.ln());
    stamps(0.0, config.duration_s, config.camera_hz)
        .into_iter()
        .map(|t| {
            let lux = if hi > lo { rng.random_range(lo..hi).exp() } else { lo.exp() };
            let exposure_ns = (config.exposure.model.predict(lux) * 1e9).round() as u64;
            ExposureRecord {
                t: Timestamp(t),
                exposure_ns,
                lux: Some(lux),
            }
        })
        .collect()
}

/// Planar-target views under a radial vignette: random texture, translation
/// homographies (the first three a unit step apart so every pixel is linked),
/// exposures chosen to keep pixels below 0.9.
pub fn sample_views(config: &RigConfig) -> (ViewSet, Image, Image) {
    let c = &config.camera;
    let mut rng = channel_rng(config.seed, Channel::Texture);
    let mut noise = channel_rng(config.seed, Channel::ImageNoise);
    let texture = Image::new(
        c.texture_width,
        c.texture_height,
        (0..c.texture_width * c.texture_height)
            .map(|_| rng.random_range(0.2..0.9))
            .collect(),
    )
    .expect("sized");
    let vignette = radial_vignette(c.width, c.height, c.vignette_strength);
    let views = (0..c.views)
        .map(|k| {
            let (dx, dy) = match k {
                0 => (0, 0),
                1 => (1, 0),
                2 => (0, 1),
                _ => (
                    rng.random_range(0..=(c.texture_width - c.width)),
                    rng.random_range(0..=(c.texture_height - c.height)),
                ),
            };
            let h = Matrix3::new(1.0, 0.0, dx as f64, 0.0, 1.0, dy as f64, 0.0, 0.0, 1.0);
            let exposure_s = rng.random_range(0.6..1.0);
            let correspondence = Correspondence::from_homography(c.width, c.height, &h, c.texture_width, c.texture_height);
            let mut image = render_image(&texture, exposure_s, &vignette, &correspondence).expect("full coverage");
            if c.image_noise > 0.0 {
                for v in &mut image.values {
                    *v = (*v * (1.0 + c.image_noise * normal(&mut noise))).clamp(0.0, 1.0);
                }
            }
            (
                CalibrationView {
                    exposure_s,
                    image,
                    correspondence,
                },
                h,
            )
        })
        .collect();
    (
        ViewSet {
            texture_width: c.texture_width,
            texture_height: c.texture_height,
            views,
        },
        vignette,
        texture,
    )
}

pub const VIEWS_DIR: &str = "views";
pub const VIGNETTE_TRUTH_FILE: &str = "vignette_truth.pgm";

/// Writes every stream of the rig into `out_dir`: `imu.csv`, `mocap.csv`,
/// `gt.csv`, `exposures.csv`, `pairs.csv`, `truth.txt` and `views/`.
pub fn emit_dataset(config: &RigConfig, out_dir: &Path) -> Result<DatasetDir> {
    std::fs::create_dir_all(out_dir).map_err(|source| IngestError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let dir = DatasetDir::new(out_dir);
    let gt = config.ground_truth();
    let imu = sample_imu(&gt, config);
    ingest::write_imu(&dir.imu(), &imu.raw)?;
    ingest::write_trajectory(&dir.mocap(), &sample_mocap(&gt, config))?;
    ingest::write_trajectory(&dir.gt(), &ground_truth_trajectory(&gt, config))?;
    ingest::write_exposures(&dir.exposures(), &sample_exposures(config))?;
    ingest::write_pairs(&dir.pairs(), &sample_pairs(&gt, config))?;
    ingest::write_calibration(&config.truth(), &dir.truth())?;
    let (views, vignette, _) = sample_views(config);
    let vdir = out_dir.join(VIEWS_DIR);
    photometric::write_view_set(&vdir, &views)?;
    photometric::write_pgm16(&vdir.join(VIGNETTE_TRUTH_FILE), &vignette)?;
    Ok(dir)
}

/// Applies a random right perturbation of the given size to a pose; useful
/// for building noisy test inputs outside the rig.
pub fn jitter(pose: &RigidMotion, rng: &mut ChaCha20Rng, sigma_rot: f64, sigma_trans: f64) -> RigidMotion {
    let xi = Vector6::new(
        normal(rng) * sigma_trans,
        normal(rng) * sigma_trans,
        normal(rng) * sigma_trans,
        normal(rng) * sigma_rot,
        normal(rng) * sigma_rot,
        normal(rng) * sigma_rot,
    );
    *pose * RigidMotion::exp(&xi)
}

/// Intrinsics with small random misalignment, lower-triangular `M_a`.
pub fn random_intrinsics(rng: &mut ChaCha20Rng, scale: f64, bias: f64) -> ImuIntrinsics {
    let mut u = |s: f64| rng.random_range(-s..s);
    let mut m_a = Matrix3::identity();
    let mut m_g = Matrix3::identity();
    for r in 0..3 {
        for c in 0..3 {
            m_g[(r, c)] += u(scale);
            if c <= r {
                m_a[(r, c)] += u(scale);
            }
        }
    }
    ImuIntrinsics {
        m_a,
        m_g,
        b_a: Vector3::new(u(bias), u(bias), u(bias)) * 10.0,
        b_g: Vector3::new(u(bias), u(bias), u(bias)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3_log;
    use approx::assert_abs_diff_eq;

    fn small_config() -> RigConfig {
        RigConfig {
            duration_s: 4.0,
            camera: CameraConfig {
                width: 16,
                height: 12,
                texture_width: 32,
                texture_height: 24,
                views: 4,
                ..Default::default()
            },
            pairs: PairsConfig {
                count: 20,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn stationary_rig() {
        let gt = GroundTruth {
            spec: TrajectorySpec::stationary(),
            gravity: gravity_vector(),
            t_mi: RigidMotion::identity(),
            t_wg: RigidMotion::identity(),
        };
        for t in [0.0, 1.3, 17.0] {
            assert_eq!(gt.omega(t), Vector3::zeros());
            assert_eq!(gt.specific_force(t), -gravity_vector());
        }
    }

    #[test]
    fn spin_is_exact() {
        let gt = GroundTruth {
            spec: TrajectorySpec::spin_z(1.0),
            gravity: gravity_vector(),
            t_mi: RigidMotion::identity(),
            t_wg: RigidMotion::identity(),
        };
        for t in [0.0, 0.7, 3.1] {
            assert_eq!(gt.omega(t), Vector3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let cfg = RigConfig::default();
        let gt = cfg.ground_truth();
        for &t in &[0.3, 5.0, 21.7] {
            let errs: Vec<(f64, f64)> = [1e-3, 5e-4]
                .iter()
                .map(|&h| {
                    let w = so3_log(&(gt.rotation(t - h).inverse() * gt.rotation(t + h))) / (2.0 * h);
                    let a = (gt.position(t + h) - 2.0 * gt.position(t) + gt.position(t - h)) / (h * h);
                    ((w - gt.omega(t)).norm(), (a - gt.acceleration(t)).norm())
                })
                .collect();
            // halving the step quarters the error
            assert!(errs[1].0 < errs[0].0 / 3.0 && errs[0].0 < 1e-4, "{errs:?}");
            assert!(errs[1].1 < errs[0].1 / 3.0 || errs[1].1 < 1e-6, "{errs:?}");
            let v = (gt.position(t + 1e-5) - gt.position(t - 1e-5)) / 2e-5;
            assert_abs_diff_eq!(v, gt.velocity(t), epsilon = 1e-7);
        }
    }

    #[test]
    fn noiseless_identity_imu_is_analytic() {
        let cfg = RigConfig {
            accel_noise: SensorNoise::default(),
            gyro_noise: SensorNoise::default(),
            ..small_config()
        };
        let gt = cfg.ground_truth();
        let s = sample_imu(&gt, &cfg);
        assert_eq!(s.raw.len(), 801);
        for x in &s.raw {
            let t = x.t.as_secs_f64();
            assert_abs_diff_eq!(x.gyro, gt.omega(t), epsilon = 1e-12);
            assert_abs_diff_eq!(x.accel, gt.specific_force(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn mocap_matches_gt_without_noise() {
        let cfg = RigConfig {
            mocap_noise: MocapNoise {
                sigma_rot_rad: 0.0,
                sigma_trans_m: 0.0,
                ..Default::default()
            },
            ..small_config()
        };
        let gt = cfg.ground_truth();
        let m = sample_mocap(&gt, &cfg);
        let g = ground_truth_trajectory(&gt, &cfg);
        assert_eq!(m.samples(), g.samples());
        assert_eq!(m.len(), 481);
    }

    #[test]
    fn offset_and_gap() {
        let cfg = RigConfig {
            mocap_offset_ns: 12_300_000,
            mocap_gap: Some((1.0, 3.0)),
            ..small_config()
        };
        let gt = cfg.ground_truth();
        let m = sample_mocap(&gt, &cfg);
        assert_eq!(m.first_time(), Some(Timestamp(12_300_000)));
        let g = ground_truth_trajectory(&gt, &cfg);
        assert!(g.timestamps().all(|t| !(t.as_secs_f64() > 1.0 && t.as_secs_f64() < 3.0)));
        assert_eq!(g.len(), m.len());
    }

    #[test]
    fn glitches_are_isolated_spikes() {
        let cfg = RigConfig {
            mocap_noise: MocapNoise {
                sigma_rot_rad: 0.0,
                sigma_trans_m: 0.0,
                glitch_rate: 0.01,
                glitch_magnitude_m: 1.0,
            },
            duration_s: 30.0,
            ..small_config()
        };
        let gt = cfg.ground_truth();
        let m = sample_mocap(&gt, &cfg);
        let clean = ground_truth_trajectory(&gt, &cfg);
        let flags: Vec<bool> = m
            .samples()
            .iter()
            .zip(clean.samples())
            .map(|(a, b)| (a.pose.translation() - b.pose.translation()).norm() > 0.5)
            .collect();
        assert!(flags.iter().filter(|f| **f).count() > 10);
        assert!(flags.windows(2).all(|w| !(w[0] && w[1])));
    }

    #[test]
    fn pairs_satisfy_the_loop_without_noise() {
        let mut rng = channel_rng(5, Channel::Trajectory);
        let cfg = RigConfig {
            t_mi: jitter(&RigidMotion::identity(), &mut rng, 1.0, 0.1),
            t_wg: jitter(&RigidMotion::identity(), &mut rng, 1.0, 2.0),
            mocap_noise: MocapNoise {
                sigma_rot_rad: 0.0,
                sigma_trans_m: 0.0,
                ..Default::default()
            },
            pairs: PairsConfig {
                count: 20,
                sigma_rot_rad: 0.0,
                sigma_trans_m: 0.0,
            },
            ..small_config()
        };
        let gt = cfg.ground_truth();
        for p in sample_pairs(&gt, &cfg) {
            let loop_ = (p.t_wm * cfg.t_mi * p.t_ig).inverse() * cfg.t_wg;
            assert!(loop_.magnitude().0 < 1e-12 && loop_.magnitude().1 < 1e-12);
        }
    }

    #[test]
    fn exposures_follow_the_law() {
        let cfg = small_config();
        let e = sample_exposures(&cfg);
        assert_eq!(e.len(), 81);
        for r in &e {
            let expected = cfg.exposure.model.predict(r.lux.unwrap());
            assert!((r.exposure_s() - expected).abs() <= 0.5e-9);
        }
    }

    #[test]
    fn emit_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small_config();
        emit_dataset(&cfg, a.path()).unwrap();
        emit_dataset(&cfg, b.path()).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 7);
        for n in names {
            let pa = a.path().join(&n);
            if pa.is_dir() {
                for e in std::fs::read_dir(&pa).unwrap() {
                    let e = e.unwrap();
                    let other = b.path().join(&n).join(e.file_name());
                    assert_eq!(std::fs::read(e.path()).unwrap(), std::fs::read(other).unwrap());
                }
            } else {
                assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(b.path().join(&n)).unwrap());
            }
        }
    }

    #[test]
    fn seeds_change_outputs() {
        let a = sample_imu(&small_config().ground_truth(), &small_config());
        let cfg = RigConfig {
            seed: 43,
            ..small_config()
        };
        let b = sample_imu(&cfg.ground_truth(), &cfg);
        assert_ne!(a.raw, b.raw);
    }

    #[test]
    fn config_parses_all_sections() {
        let text = "[rig]\nseed = 7\nduration_s = 10\nmocap_offset_ns = -250000000\nmocap_gap_s = 2, 8\n\
                    [trajectory]\nkind = explicit\nyaw = 0, 1\nroll = 0.1, 0, 0.5, 1.2, 0\n\
                    [noise]\ngyro_sigma_w = 1e-4\n[mocap]\nsigma_rot_deg = 0.05\n\
                    [M_g]\nrow0 = 1.01, 0, 0\nrow1 = 0, 1, 0\nrow2 = 0, 0, 1\n\
                    [camera]\nviews = 6\n[exposure]\nk = 0.25\n";
        let c = RigConfig::parse(text.as_bytes(), None).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.mocap_offset_ns, -250_000_000);
        assert_eq!(c.mocap_gap, Some((2.0, 8.0)));
        assert_eq!(c.trajectory.euler[0].rate, 1.0);
        assert_eq!(c.trajectory.euler[2].harmonics.len(), 1);
        assert_eq!(c.gyro_noise.sigma_w, 1e-4);
        assert_abs_diff_eq!(c.mocap_noise.sigma_rot_rad, 0.05f64.to_radians());
        assert_eq!(c.intrinsics.m_g[(0, 0)], 1.01);
        assert_eq!(c.camera.views, 6);
        assert_eq!(c.exposure.model.k, 0.25);
        assert_eq!(RigConfig::parse(text.as_bytes(), Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn config_rejects_bad_values() {
        for bad in [
            "[rig]\nduration_s = -1\n",
            "[trajectory]\nkind = loop\n",
            "[trajectory]\nkind = explicit\ntx = 1, 2, 3\n",
            "[rig]\nmocap_offset_ns = 2000000000\n",
            "[camera]\nwidth = 0\n",
            "[mocap]\nglitch_rate = 0.9\n",
        ] {
            assert!(RigConfig::parse(bad.as_bytes(), None).is_err(), "{bad}");
        }
    }

    #[test]
    fn emitted_streams_load_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let gt = cfg.ground_truth();
        let d = emit_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(ingest::load_imu(&d.imu()).unwrap(), sample_imu(&gt, &cfg).raw);
        assert_eq!(ingest::load_mocap(&d.mocap()).unwrap().0, sample_mocap(&gt, &cfg));
        let (loaded_gt, _) = ingest::load_trajectory(&d.gt(), Frame::W, Frame::I).unwrap();
        assert_eq!(loaded_gt, ground_truth_trajectory(&gt, &cfg));
        assert_eq!(ingest::load_exposures(&d.exposures()).unwrap(), sample_exposures(&cfg));
        assert_eq!(ingest::load_pairs(&d.pairs()).unwrap().0, sample_pairs(&gt, &cfg));
        assert_eq!(ingest::load_calibration(&d.truth()).unwrap(), cfg.truth());
    }

    #[test]
    fn room_style_coverage_gives_two_segments() {
        let cfg = RigConfig {
            duration_s: 40.0,
            mocap_gap: Some((10.0, 30.0)),
            ..Default::default()
        };
        let gt = ground_truth_trajectory(&cfg.ground_truth(), &cfg);
        let report = crate::trajeval::evaluate(&gt, &gt, &Default::default()).unwrap();
        assert_eq!(report.segments, 2);
        assert_eq!(report.segment_ates.len(), 2);
    }

    /// Position error after integrating the clean IMU signals for 10 s.
    fn dead_reckoning_error(imu_hz: f64) -> f64 {
        let cfg = RigConfig {
            duration_s: 10.0,
            imu_hz,
            gyro_noise: SensorNoise { sigma_w: 0.0, sigma_b: 0.0 },
            accel_noise: SensorNoise { sigma_w: 0.0, sigma_b: 0.0 },
            ..Default::default()
        };
        let gt = cfg.ground_truth();
        let clean = sample_imu(&gt, &cfg).clean;
        let mut r = gt.rotation(0.0);
        let mut v = gt.velocity(0.0);
        let mut p = gt.position(0.0);
        for w in clean.windows(2) {
            let dt = secs(w[1].t.0 - w[0].t.0);
            let a0 = r * w[0].accel + gt.gravity;
            let r1 = r * crate::geometry::so3_exp(&((w[0].gyro + w[1].gyro) * (0.5 * dt)));
            let a1 = r1 * w[1].accel + gt.gravity;
            let v1 = v + (a0 + a1) * (0.5 * dt);
            p += (v + v1) * (0.5 * dt);
            v = v1;
            r = r1;
        }
        (p - gt.position(secs(clean.last().unwrap().t.0))).norm()
    }

    #[test]
    fn integrating_clean_imu_converges_quadratically() {
        let coarse = dead_reckoning_error(200.0);
        let fine = dead_reckoning_error(400.0);
        assert!(coarse < 0.5, "{coarse}");
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]

        #[test]
        fn same_seed_same_streams(seed in proptest::prelude::any::<u64>()) {
            let a = RigConfig::parse(b"[rig]\nduration_s = 1\n", Some(seed)).unwrap();
            let b = RigConfig::parse(b"[rig]\nduration_s = 1\n", Some(seed)).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            let (ga, gb) = (a.ground_truth(), b.ground_truth());
            proptest::prop_assert_eq!(sample_imu(&ga, &a), sample_imu(&gb, &b));
            proptest::prop_assert_eq!(sample_mocap(&ga, &a), sample_mocap(&gb, &b));
            proptest::prop_assert_eq!(sample_exposures(&a), sample_exposures(&b));
        }
    }
}
