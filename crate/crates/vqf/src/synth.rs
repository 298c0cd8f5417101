//! Synthetic IMU recordings with exact ground truth, for testing and
//! benchmarking the estimators.
//!
//! A [`TrajectorySpec`] describes piecewise motion (constant or sinusoidal
//! angular rate and linear acceleration), a constant gyroscope bias, sensor
//! noise levels, the local magnetic field and optional disturbance windows.
//! [`generate`] integrates the motion with fine substeps and renders the
//! sensor samples a real IMU would produce.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::VqfError;
use crate::quat::{Quaternion, Vec3};

/// Standard gravity (m/s²) used for the accelerometer model.
pub const GRAVITY: f64 = 9.81;

const DEG: f64 = std::f64::consts::PI / 180.0;
const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Time course of a three-dimensional quantity within a segment. Sinusoid
/// phases are relative to the segment start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionProfile {
    /// Constant value.
    Constant(Vec3),
    /// `offset + amplitude * sin(2*pi*frequency*t + phase)`, per axis.
    Sinusoid { offset: Vec3, amplitude: Vec3, frequency: f64, phase: Vec3 },
}

impl Default for MotionProfile {
    fn default() -> Self {
        MotionProfile::Constant(Vec3::ZERO)
    }
}

impl MotionProfile {
    fn eval(&self, t: f64) -> Vec3 {
        match *self {
            MotionProfile::Constant(v) => v,
            MotionProfile::Sinusoid { offset, amplitude, frequency, phase } => Vec3::new(
                offset.x + amplitude.x * (TAU * frequency * t + phase.x).sin(),
                offset.y + amplitude.y * (TAU * frequency * t + phase.y).sin(),
                offset.z + amplitude.z * (TAU * frequency * t + phase.z).sin(),
            ),
        }
    }

    fn is_zero(&self) -> bool {
        match *self {
            MotionProfile::Constant(v) => v == Vec3::ZERO,
            MotionProfile::Sinusoid { offset, amplitude, .. } => {
                offset == Vec3::ZERO && amplitude == Vec3::ZERO
            }
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            MotionProfile::Constant(v) => v.is_finite(),
            MotionProfile::Sinusoid { offset, amplitude, frequency, phase } => {
                offset.is_finite()
                    && amplitude.is_finite()
                    && phase.is_finite()
                    && frequency.is_finite()
                    && frequency >= 0.0
            }
        }
    }
}

/// One piece of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Length of the segment in seconds.
    pub duration: f64,
    /// Angular rate (rad/s) of the sensor relative to the world.
    #[serde(default)]
    pub angular_rate: MotionProfile,
    /// Linear acceleration (m/s²) of the sensor in world coordinates, on top
    /// of gravity.
    #[serde(default)]
    pub linear_acc: MotionProfile,
}

/// Homogeneous magnetic field of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagFieldSpec {
    /// Field strength in arbitrary units (e.g. µT).
    pub norm: f64,
    /// Dip angle in degrees, positive when the field points below the
    /// horizon.
    pub dip_deg: f64,
}

impl MagFieldSpec {
    /// World-frame field vector: horizontal component to the north (+y),
    /// vertical component down for a positive dip.
    pub fn vector(&self) -> Vec3 {
        let dip = self.dip_deg * DEG;
        Vec3::new(0.0, self.norm * dip.cos(), -self.norm * dip.sin())
    }
}

/// A window during which an extra field is added to the ambient one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Start time in seconds.
    pub start: f64,
    /// Length in seconds.
    pub duration: f64,
    /// Field added in world coordinates during the window.
    pub delta_field: Vec3,
}

/// Complete description of a synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Motion, played back in order.
    pub segments: Vec<Segment>,
    /// Constant gyroscope bias (rad/s) added to the gyroscope samples.
    #[serde(default)]
    pub gyro_bias: Vec3,
    /// Gyroscope noise standard deviation (rad/s), per axis.
    #[serde(default)]
    pub noise_gyr: f64,
    /// Accelerometer noise standard deviation (m/s²), per axis.
    #[serde(default)]
    pub noise_acc: f64,
    /// Magnetometer noise standard deviation (field units), per axis.
    #[serde(default)]
    pub noise_mag: f64,
    /// Ambient magnetic field; omit to generate no magnetometer data.
    #[serde(default)]
    pub mag_field: Option<MagFieldSpec>,
    /// Magnetic disturbance windows.
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// Seed of the noise generator.
    #[serde(default)]
    pub seed: u64,
}

/// One rendered IMU sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Sample time in seconds.
    pub t: f64,
    /// Gyroscope reading (rad/s), including bias and noise.
    pub gyr: Vec3,
    /// Accelerometer reading (m/s²).
    pub acc: Vec3,
    /// Magnetometer reading, absent when no field is configured.
    pub mag: Option<Vec3>,
}

/// Exact reference trajectory matching the rendered samples: entry `k`
/// holds the state after sample `k` has been consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True orientation (sensor to world).
    pub quat: Vec<Quaternion>,
    /// Whether the trajectory is at rest (no rotation, no acceleration).
    pub rest: Vec<bool>,
    /// Whether a disturbance window is active.
    pub disturbed: Vec<bool>,
    /// The constant gyroscope bias (rad/s).
    pub bias: Vec3,
}

fn validate(spec: &TrajectorySpec, ts: f64) -> Result<(), VqfError> {
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(VqfError::InvalidParam { field: "ts", reason: "must be positive and finite" });
    }
    if spec.segments.is_empty() {
        return Err(VqfError::InvalidParam { field: "segments", reason: "must not be empty" });
    }
    for seg in &spec.segments {
        if !(seg.duration > 0.0) || !seg.duration.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "duration",
                reason: "must be positive and finite",
            });
        }
        if !seg.angular_rate.is_valid() {
            return Err(VqfError::InvalidParam {
                field: "angular_rate",
                reason: "must be finite with non-negative frequency",
            });
        }
        if !seg.linear_acc.is_valid() {
            return Err(VqfError::InvalidParam {
                field: "linear_acc",
                reason: "must be finite with non-negative frequency",
            });
        }
    }
    if !spec.gyro_bias.is_finite() {
        return Err(VqfError::InvalidParam { field: "gyro_bias", reason: "must be finite" });
    }
    for (field, value) in [
        ("noise_gyr", spec.noise_gyr),
        ("noise_acc", spec.noise_acc),
        ("noise_mag", spec.noise_mag),
    ] {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(VqfError::InvalidParam { field, reason: "must be non-negative and finite" });
        }
    }
    if let Some(field) = &spec.mag_field {
        if !(field.norm > 0.0) || !field.norm.is_finite() {
            return Err(VqfError::InvalidParam { field: "norm", reason: "must be positive and finite" });
        }
        if !(field.dip_deg.abs() < 90.0) {
            return Err(VqfError::InvalidParam {
                field: "dip_deg",
                reason: "must be strictly between -90 and 90",
            });
        }
    }
    for d in &spec.disturbances {
        if !(d.start >= 0.0) || !d.start.is_finite() {
            return Err(VqfError::InvalidParam { field: "start", reason: "must be non-negative and finite" });
        }
        if !(d.duration > 0.0) || !d.duration.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "duration",
                reason: "must be positive and finite",
            });
        }
        if !d.delta_field.is_finite() {
            return Err(VqfError::InvalidParam { field: "delta_field", reason: "must be finite" });
        }
    }
    Ok(())
}

struct Timeline<'a> {
    segments: &'a [Segment],
    starts: Vec<f64>,
    total: f64,
}

impl<'a> Timeline<'a> {
    fn new(segments: &'a [Segment]) -> Timeline<'a> {
        let mut starts = Vec::with_capacity(segments.len());
        let mut total = 0.0;
        for seg in segments {
            starts.push(total);
            total += seg.duration;
        }
        Timeline { segments, starts, total }
    }

    fn locate(&self, t: f64) -> (&Segment, f64) {
        let idx = match self.starts.partition_point(|&s| s <= t) {
            0 => 0,
            n => n - 1,
        };
        (&self.segments[idx], t - self.starts[idx])
    }

    fn angular_rate(&self, t: f64) -> Vec3 {
        let (seg, local) = self.locate(t);
        seg.angular_rate.eval(local)
    }

    fn linear_acc(&self, t: f64) -> Vec3 {
        let (seg, local) = self.locate(t);
        seg.linear_acc.eval(local)
    }

    fn is_rest(&self, t: f64) -> bool {
        let (seg, _) = self.locate(t);
        seg.angular_rate.is_zero() && seg.linear_acc.is_zero()
    }
}

/// Renders the IMU samples and ground truth for `spec` at sampling time
/// `ts`. Sample `k` covers the interval from `k*ts` to `(k+1)*ts`: the
/// gyroscope is sampled at the interval midpoint and the truth orientation
/// is integrated with 16 substeps per interval, so the rendered recording
/// is consistent with a midpoint-rule strapdown to well below sensor noise.
pub fn generate(
    spec: &TrajectorySpec,
    ts: f64,
) -> Result<(Vec<ImuSample>, GroundTruth), VqfError> {
    validate(spec, ts)?;
    let timeline = Timeline::new(&spec.segments);
    let n = (timeline.total / ts).round() as usize;
    if n == 0 {
        return Err(VqfError::TooShort { got: 0, need: 1 });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise = |std: f64| -> Vec3 {
        let v = Vec3::new(unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng));
        v * std
    };

    let field = spec.mag_field.as_ref().map(MagFieldSpec::vector);
    let substeps = 16;
    let h = ts / substeps as f64;

    let mut q = Quaternion::IDENTITY;
    let mut samples = Vec::with_capacity(n);
    let mut truth = GroundTruth {
        quat: Vec::with_capacity(n),
        rest: Vec::with_capacity(n),
        disturbed: Vec::with_capacity(n),
        bias: spec.gyro_bias,
    };

    for k in 0..n {
        let t0 = k as f64 * ts;
        let t_mid = (k as f64 + 0.5) * ts;
        let t1 = (k + 1) as f64 * ts;

        let gyr = timeline.angular_rate(t_mid) + spec.gyro_bias + noise(spec.noise_gyr);

        for j in 0..substeps {
            let w = timeline.angular_rate(t0 + (j as f64 + 0.5) * h);
            let angle = h * w.norm();
            if angle > 0.0 {
                q = q.multiply(Quaternion::from_angle_axis(angle, w));
            }
        }
        q = q.normalized();

        // Specific force in sensor coordinates at the post-step orientation.
        let world_acc = Vec3::new(0.0, 0.0, GRAVITY) + timeline.linear_acc(t1);
        let acc = q.inverse().rotate(world_acc) + noise(spec.noise_acc);

        let mut disturbed = false;
        let mag = field.map(|f| {
            let mut world = f;
            for d in &spec.disturbances {
                if t1 >= d.start && t1 < d.start + d.duration {
                    world = world + d.delta_field;
                    disturbed = true;
                }
            }
            q.inverse().rotate(world) + noise(spec.noise_mag)
        });

        samples.push(ImuSample { t: t0, gyr, acc, mag });
        truth.quat.push(q);
        truth.rest.push(timeline.is_rest(t_mid));
        truth.disturbed.push(disturbed);
    }
    Ok((samples, truth))
}

fn shortest_arc(from: Vec3, to: Vec3) -> Quaternion {
    let d = from.dot(to);
    if d < -1.0 + 1e-12 {
        // Antiparallel: rotate half a turn about any perpendicular axis.
        let axis = if from.x.abs() < 0.9 {
            from.cross(Vec3::new(1.0, 0.0, 0.0))
        } else {
            from.cross(Vec3::new(0.0, 1.0, 0.0))
        };
        return Quaternion::from_angle_axis(std::f64::consts::PI, axis);
    }
    let c = from.cross(to);
    Quaternion::new(1.0 + d, c.x, c.y, c.z).normalized()
}

/// Reconstructs the orientation of a motionless sensor from a single
/// accelerometer and magnetometer sample: the accelerometer fixes "up", the
/// leveled magnetometer fixes north (+y). Fails when either vector vanishes
/// or the field is (anti)parallel to gravity, leaving the heading undefined.
pub fn static_pose_oracle(acc: Vec3, mag: Vec3) -> Result<Quaternion, VqfError> {
    if !acc.is_finite() || !mag.is_finite() {
        return Err(VqfError::NonFiniteSample);
    }
    let up = acc.normalized().ok_or(VqfError::CollinearReference)?;
    let tilt = shortest_arc(up, Vec3::Z);
    let leveled = tilt.rotate(mag);
    let horizontal = leveled.x.hypot(leveled.y);
    if horizontal < 1e-9 * mag.norm() || horizontal == 0.0 {
        return Err(VqfError::CollinearReference);
    }
    let heading = Quaternion::from_angle_axis(leveled.x.atan2(leveled.y), Vec3::Z);
    Ok(heading.multiply(tilt).normalized())
}
