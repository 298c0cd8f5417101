//! Inertial orientation estimation from gyroscope, accelerometer and
//! (optionally) magnetometer samples.
//!
//! The estimator keeps the gyroscope strapdown integration strictly separate
//! from the accelerometer inclination correction and the magnetometer heading
//! correction, so the 6D (magnetometer-free) estimate is never influenced by
//! magnetometer data. On top of the basic filter ([`BasicVqf`]), the full
//! filter ([`Vqf`]) adds rest detection, online gyroscope bias estimation via
//! a Kalman filter, and magnetic disturbance detection and rejection. An
//! offline variant ([`offline_vqf`]) post-processes a complete recording with
//! forward/backward passes and zero-phase filtering.
//!
//! Conventions used throughout:
//!
//! * quaternions are Hamilton, scalar first, and map sensor-frame coordinates
//!   to reference-frame coordinates,
//! * the reference frame is ENU: z up, y magnetic north,
//! * gyroscope in rad/s, accelerometer in m/s², magnetometer in any unit,
//! * all time constants and the sampling time in seconds.
//!
//! ```
//! use vqf::{Vec3, Vqf, VqfParams};
//!
//! let mut filter = Vqf::new(0.01, VqfParams::default()).unwrap();
//! let record = filter
//!     .update(
//!         Vec3::new(0.02, -0.01, 0.03),
//!         Vec3::new(0.1, -0.2, 9.8),
//!         Some(Vec3::new(5.1, 18.2, -43.8)),
//!     )
//!     .unwrap();
//! assert!((record.quat_9d.norm() - 1.0).abs() < 1e-12);
//! ```

mod basic;
mod bias;
mod error;
mod filter;
mod lowpass;
mod magdist;
pub mod metrics;
mod offline;
mod quat;
pub mod synth;

pub use basic::BasicVqf;
pub use bias::{bias_sigma, kalman_noise, BiasKalman, KalmanNoise, RestDetector};
pub use error::VqfError;
pub use filter::{EstimateRecord, Vqf, VqfParams};
pub use lowpass::{
    cutoff_from_tau, exp_smoothing_gain, filtfilt, ButterCoeffs, LpfState,
};
pub use magdist::{norm_and_dip, MagDistConfig, MagDisturbance};
pub use offline::{offline_vqf, reverse_run_transform, OfflineResult};
pub use quat::{wrap_to_pi, Mat3, Quaternion, Vec3};
