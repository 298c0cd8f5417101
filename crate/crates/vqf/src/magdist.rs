//! Magnetic disturbance detection based on the field norm and dip angle,
//! with rejection of disturbed samples and acceptance of a persistently
//! changed field as the new reference.

use crate::error::VqfError;
use crate::lowpass::{exp_smoothing_gain, ButterCoeffs, LpfState};
use crate::quat::{Quaternion, Vec3};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Norm (in the magnetometer's unit) and dip angle (radians, positive down)
/// of a magnetometer sample, judged in the earth frame given the current 6D
/// orientation estimate. `None` for a zero or non-finite sample.
pub fn norm_and_dip(mag: Vec3, quat6: Quaternion) -> Option<(f64, f64)> {
    if !mag.is_finite() {
        return None;
    }
    let norm = mag.norm();
    if norm == 0.0 {
        return None;
    }
    let mag_earth = quat6.rotate(mag);
    Some((norm, -(mag_earth.z / norm).clamp(-1.0, 1.0).asin()))
}

/// Tuning parameters of the disturbance handling. Angles in radians, times
/// in seconds; the norm threshold is relative to the reference norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagDistConfig {
    /// Time constant for filtering the current norm and dip.
    pub current_tau: f64,
    /// Time constant for tracking the reference (and candidate) field.
    pub ref_tau: f64,
    /// Relative norm deviation below which the field matches the reference.
    pub norm_th: f64,
    /// Absolute dip deviation (rad) below which the field matches.
    pub dip_th: f64,
    /// Undisturbed time needed before the disturbed flag clears.
    pub min_undisturbed_time: f64,
    /// Stable time after which a changed field becomes the new reference.
    pub new_time: f64,
    /// Minimum gyroscope norm (rad/s) for the acceptance timer to run.
    pub new_min_gyr: f64,
    /// Total time the heading correction is fully suspended per disturbance.
    pub max_rejection_time: f64,
    /// Gain divisor after `max_rejection_time` and decay factor of the
    /// rejection timer while undisturbed.
    pub rejection_factor: f64,
}

impl Default for MagDistConfig {
    fn default() -> Self {
        MagDistConfig {
            current_tau: 0.05,
            ref_tau: 20.0,
            norm_th: 0.1,
            dip_th: 10.0 * DEG,
            min_undisturbed_time: 0.5,
            new_time: 20.0,
            new_min_gyr: 20.0 * DEG,
            max_rejection_time: 60.0,
            rejection_factor: 2.0,
        }
    }
}

/// Magnetic disturbance state machine.
///
/// Each step classifies the filtered field against the reference
/// (detection), tracks a candidate for a persistently changed field
/// (acceptance) and derives the gain scale for the heading correction
/// (rejection). The reference initializes itself from the first filtered
/// sample once the `current_tau` filter window has passed.
#[derive(Debug, Clone, PartialEq)]
pub struct MagDisturbance {
    ts: f64,
    cfg: MagDistConfig,
    k_ref: f64,
    coeffs: ButterCoeffs,
    norm_lp: LpfState,
    dip_lp: LpfState,
    ref_valid: bool,
    ref_norm: f64,
    ref_dip: f64,
    cand_norm: f64,
    cand_dip: f64,
    t_cand: f64,
    t_undisturbed: f64,
    t_reject: f64,
    disturbed: bool,
}

impl MagDisturbance {
    pub fn new(ts: f64, cfg: MagDistConfig) -> Result<MagDisturbance, VqfError> {
        let coeffs =
            ButterCoeffs::design(cfg.current_tau, ts).map_err(|_| VqfError::InvalidParam {
                field: "mag_current_tau",
                reason: "must be positive with a cutoff below Nyquist",
            })?;
        let k_ref = exp_smoothing_gain(cfg.ref_tau, ts).map_err(|_| VqfError::InvalidParam {
            field: "mag_ref_tau",
            reason: "must be positive and finite",
        })?;
        if !(cfg.norm_th > 0.0) || !(cfg.dip_th > 0.0) {
            return Err(VqfError::InvalidParam {
                field: "mag_norm_th",
                reason: "thresholds must be positive",
            });
        }
        if !(cfg.min_undisturbed_time >= 0.0)
            || !(cfg.new_time > 0.0)
            || !(cfg.new_min_gyr >= 0.0)
            || !(cfg.max_rejection_time > 0.0)
        {
            return Err(VqfError::InvalidParam {
                field: "mag_new_time",
                reason: "times must be positive",
            });
        }
        if !(cfg.rejection_factor >= 1.0) || !cfg.rejection_factor.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "mag_rejection_factor",
                reason: "must be at least 1",
            });
        }
        Ok(MagDisturbance {
            ts,
            cfg,
            k_ref,
            coeffs,
            norm_lp: LpfState::new(cfg.current_tau, ts),
            dip_lp: LpfState::new(cfg.current_tau, ts),
            ref_valid: false,
            ref_norm: 0.0,
            ref_dip: 0.0,
            cand_norm: -1.0,
            cand_dip: 0.0,
            t_cand: 0.0,
            t_undisturbed: 0.0,
            t_reject: 0.0,
            disturbed: false,
        })
    }

    /// Processes one magnetometer sample and returns the disturbance flag
    /// and the gain scale (0, 1/rejection_factor or 1) for the heading
    /// correction. `gyr_norm` is the norm of the raw gyroscope sample.
    ///
    /// A zero or non-finite sample leaves the state untouched and reports
    /// the previous flag with the correction suspended.
    pub fn step(&mut self, mag: Vec3, quat6: Quaternion, gyr_norm: f64) -> (bool, f64) {
        let Some((norm, dip)) = norm_and_dip(mag, quat6) else {
            return (self.disturbed, 0.0);
        };
        let norm_f = self.norm_lp.step(&self.coeffs, norm);
        let dip_f = self.dip_lp.step(&self.coeffs, dip);

        if !self.ref_valid {
            if !self.norm_lp.is_settled() {
                // Warm-up: no reference to judge against yet.
                return (false, 1.0);
            }
            self.ref_norm = norm_f;
            self.ref_dip = dip_f;
            self.ref_valid = true;
        }

        // Exclusive classification: matching the reference wins, otherwise
        // the sample counts toward the acceptance of a changed field. The
        // candidate timer must not run while the field is undisturbed, or a
        // slowly creeping disturbance would be accepted the moment it
        // finally leaves the reference band.
        if (norm_f - self.ref_norm).abs() < self.cfg.norm_th * self.ref_norm
            && (dip_f - self.ref_dip).abs() < self.cfg.dip_th
        {
            self.t_undisturbed += self.ts;
            if self.t_undisturbed >= self.cfg.min_undisturbed_time {
                self.disturbed = false;
                self.ref_norm += self.k_ref * (norm_f - self.ref_norm);
                self.ref_dip += self.k_ref * (dip_f - self.ref_dip);
            }
        } else if (norm_f - self.cand_norm).abs() < self.cfg.norm_th * self.cand_norm
            && (dip_f - self.cand_dip).abs() < self.cfg.dip_th
        {
            self.t_undisturbed = 0.0;
            self.disturbed = true;
            if gyr_norm >= self.cfg.new_min_gyr {
                self.t_cand += self.ts;
            }
            self.cand_norm += self.k_ref * (norm_f - self.cand_norm);
            self.cand_dip += self.k_ref * (dip_f - self.cand_dip);
            if self.t_cand >= self.cfg.new_time {
                self.ref_norm = self.cand_norm;
                self.ref_dip = self.cand_dip;
                self.disturbed = false;
                self.t_cand = 0.0;
                self.t_undisturbed = 0.0;
            }
        } else {
            self.t_undisturbed = 0.0;
            self.disturbed = true;
            self.t_cand = 0.0;
            self.cand_norm = norm_f;
            self.cand_dip = dip_f;
        }

        // Rejection.
        let scale = if self.disturbed {
            if self.t_reject < self.cfg.max_rejection_time {
                self.t_reject = (self.t_reject + self.ts).min(self.cfg.max_rejection_time);
                0.0
            } else {
                1.0 / self.cfg.rejection_factor
            }
        } else {
            self.t_reject = (self.t_reject - self.cfg.rejection_factor * self.ts).max(0.0);
            1.0
        };
        (self.disturbed, scale)
    }

    /// Whether the most recent sample was judged disturbed.
    pub fn is_disturbed(&self) -> bool {
        self.disturbed
    }

    /// Current reference field as `(norm, dip)`, once established.
    pub fn reference(&self) -> Option<(f64, f64)> {
        self.ref_valid.then_some((self.ref_norm, self.ref_dip))
    }

    /// Overrides the reference field, e.g. from a previous session.
    pub fn set_reference(&mut self, norm: f64, dip: f64) -> Result<(), VqfError> {
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "norm",
                reason: "must be positive and finite",
            });
        }
        if !dip.is_finite() {
            return Err(VqfError::InvalidParam { field: "dip", reason: "must be finite" });
        }
        self.ref_norm = norm;
        self.ref_dip = dip;
        self.ref_valid = true;
        Ok(())
    }
}
