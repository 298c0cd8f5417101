//! Gyroscope bias estimation: rest detection and a 3D Kalman filter that
//! fuses rest-phase gyroscope readings with motion-phase inclination drift.
//!
//! All angular quantities are rad/s; the covariance `P` is in (rad/s)².

use crate::error::VqfError;
use crate::lowpass::{ButterCoeffs, LpfState};
use crate::quat::{Mat3, Quaternion, Vec3};

const DEG: f64 = std::f64::consts::PI / 180.0;
/// Fixed drift rate of the covariance forgetting: without updates the bias
/// uncertainty grows from 0 to 0.1 deg/s over the forgetting time.
const FORGETTING_SIGMA: f64 = 0.1 * DEG;

/// Process and measurement noise of the bias Kalman filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanNoise {
    /// Process noise added to each diagonal element of `P` per step.
    pub v: f64,
    /// Measurement variance of one motion update.
    pub w_motion: f64,
    /// Measurement variance of one rest update.
    pub w_rest: f64,
    /// Initial variance `sigma_init²`.
    pub p0: f64,
}

/// Derives the Kalman filter noise quantities from the tuning parameters.
///
/// `v` realizes the covariance forgetting; `w_motion` and `w_rest` are
/// chosen such that the steady-state standard deviation of the estimate
/// equals `sigma_motion` and `sigma_rest` respectively. All sigmas in rad/s.
pub fn kalman_noise(
    ts: f64,
    forgetting_time: f64,
    sigma_motion: f64,
    sigma_rest: f64,
    sigma_init: f64,
) -> Result<KalmanNoise, VqfError> {
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(VqfError::InvalidParam { field: "ts", reason: "must be positive and finite" });
    }
    if !(forgetting_time > 0.0) || !forgetting_time.is_finite() {
        return Err(VqfError::InvalidParam {
            field: "bias_forgetting_time",
            reason: "must be positive and finite",
        });
    }
    if !(sigma_motion > 0.0) || !(sigma_rest > 0.0) {
        return Err(VqfError::InvalidParam {
            field: "bias_sigma_motion",
            reason: "sigmas must be positive",
        });
    }
    if !(sigma_init >= 0.0) || !sigma_init.is_finite() {
        return Err(VqfError::InvalidParam {
            field: "bias_sigma_init",
            reason: "must be non-negative and finite",
        });
    }
    let v = FORGETTING_SIGMA * FORGETTING_SIGMA * ts / forgetting_time;
    Ok(KalmanNoise {
        v,
        w_motion: sigma_motion.powi(4) / v + sigma_motion * sigma_motion,
        w_rest: sigma_rest.powi(4) / v + sigma_rest * sigma_rest,
        p0: sigma_init * sigma_init,
    })
}

/// Conservative standard deviation bound for a covariance matrix: the square
/// root of the largest absolute row sum (Gershgorin bound on the largest
/// eigenvalue).
pub fn bias_sigma(p: &Mat3) -> f64 {
    let row_sum = |r: &[f64; 3]| r[0].abs() + r[1].abs() + r[2].abs();
    p.0.iter().map(row_sum).fold(0.0_f64, f64::max).sqrt()
}

fn clip_vec(v: Vec3, limit: f64) -> Vec3 {
    Vec3::new(
        v.x.clamp(-limit, limit),
        v.y.clamp(-limit, limit),
        v.z.clamp(-limit, limit),
    )
}

pub(crate) enum BiasUpdateMode {
    Rest,
    Motion,
    /// Covariance forgetting only, no measurement.
    PredictOnly,
}

/// Kalman filter for the 3D gyroscope bias.
///
/// During rest the low-pass filtered gyroscope reading measures the bias
/// directly. During motion the horizontal drift of the inclination
/// measurement observes the bias through the low-pass filtered orientation
/// matrix; the vertical component is then nearly unobservable and only
/// decays via a heavily down-weighted pseudo-measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasKalman {
    ts: f64,
    v: f64,
    w_motion: f64,
    w_rest: f64,
    w_vertical: f64,
    clip: f64,
    bias: Vec3,
    p: Mat3,
    coeffs: ButterCoeffs,
    r_lp: [LpfState; 9],
    b_lp: [LpfState; 2],
}

impl BiasKalman {
    /// Creates the filter. `tau_acc` is the accelerometer time constant used
    /// for the orientation and bias low-pass filters, `vertical_factor` the
    /// weight factor of the vertical pseudo-measurement during motion, and
    /// `clip` the bias magnitude limit per component (rad/s).
    pub fn new(
        ts: f64,
        tau_acc: f64,
        noise: KalmanNoise,
        vertical_factor: f64,
        clip: f64,
    ) -> Result<BiasKalman, VqfError> {
        let coeffs = ButterCoeffs::design(tau_acc, ts).map_err(|_| VqfError::InvalidParam {
            field: "tau_acc",
            reason: "must be positive with a cutoff below Nyquist",
        })?;
        if !(vertical_factor > 0.0) {
            return Err(VqfError::InvalidParam {
                field: "bias_vertical_forgetting_factor",
                reason: "must be positive",
            });
        }
        if !(clip > 0.0) || !clip.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "bias_clip",
                reason: "must be positive and finite",
            });
        }
        Ok(BiasKalman {
            ts,
            v: noise.v,
            w_motion: noise.w_motion,
            w_rest: noise.w_rest,
            w_vertical: noise.w_motion / vertical_factor,
            clip,
            bias: Vec3::ZERO,
            p: Mat3::scaled_identity(noise.p0),
            coeffs,
            r_lp: [LpfState::new(tau_acc, ts); 9],
            b_lp: [LpfState::new(tau_acc, ts); 2],
        })
    }

    /// One estimation step.
    ///
    /// `quat6` and `acc_earth` (the normalized low-pass filtered
    /// acceleration in the earth frame, before the inclination correction)
    /// must come from the same filter step; `gyr_lp` is the rest detector's
    /// filtered gyroscope reading. With `at_rest` the direct gyroscope
    /// measurement is used, otherwise the motion observation.
    pub fn step(
        &mut self,
        quat6: Quaternion,
        acc_earth: Vec3,
        gyr_lp: Vec3,
        at_rest: bool,
    ) -> Result<(), VqfError> {
        let mode = if at_rest { BiasUpdateMode::Rest } else { BiasUpdateMode::Motion };
        self.step_mode(quat6, Some(acc_earth), gyr_lp, mode)
    }

    /// Covariance forgetting without a measurement update.
    pub fn predict(&mut self) {
        self.p = self.p.add(&Mat3::scaled_identity(self.v));
    }

    pub(crate) fn step_mode(
        &mut self,
        quat6: Quaternion,
        acc_earth: Option<Vec3>,
        gyr_lp: Vec3,
        mode: BiasUpdateMode,
    ) -> Result<(), VqfError> {
        // The orientation matrix and the earth-frame bias are filtered every
        // step so the motion observation model stays warm during rest.
        let r = Mat3::from_quat(quat6);
        let mut r_lp = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                r_lp.0[i][j] = self.r_lp[3 * i + j].step(&self.coeffs, r.0[i][j]);
            }
        }
        let rb = r.mul_vec(self.bias);
        let b_lp = Vec3::new(
            self.b_lp[0].step(&self.coeffs, rb.x),
            self.b_lp[1].step(&self.coeffs, rb.y),
            0.0,
        );

        let measurement = match mode {
            BiasUpdateMode::Rest => Some((
                Mat3::IDENTITY,
                gyr_lp,
                [self.w_rest, self.w_rest, self.w_rest],
            )),
            BiasUpdateMode::Motion => acc_earth.map(|a| {
                // The horizontal displacement of the measured vertical per
                // step, expressed as an angular rate, plus the part of the
                // current bias estimate already being corrected for.
                let y = Vec3::new(-a.y / self.ts + b_lp.x, a.x / self.ts + b_lp.y, 0.0);
                (r_lp, y, [self.w_motion, self.w_motion, self.w_vertical])
            }),
            BiasUpdateMode::PredictOnly => None,
        };

        let p_pred = self.p.add(&Mat3::scaled_identity(self.v));
        let Some((c, y, w)) = measurement else {
            self.p = p_pred;
            return Ok(());
        };

        let e = clip_vec(y - c.mul_vec(self.bias), self.clip);
        let s = c.mul_mat(&p_pred).mul_mat(&c.transpose()).add(&Mat3::diag(w));
        // On a numerically singular innovation covariance the whole step is
        // skipped and P keeps its previous value.
        let Some(s_inv) = s.inverse() else {
            return Err(VqfError::SingularInnovation);
        };
        let k = p_pred.mul_mat(&c.transpose()).mul_mat(&s_inv);
        self.bias = clip_vec(self.bias + k.mul_vec(e), self.clip);
        self.p = p_pred.sub(&k.mul_mat(&c).mul_mat(&p_pred)).symmetrized();
        Ok(())
    }

    /// Current bias estimate (rad/s).
    pub fn bias(&self) -> Vec3 {
        self.bias
    }

    /// Current covariance (rad/s)².
    pub fn covariance(&self) -> Mat3 {
        self.p
    }

    /// Conservative standard deviation of the estimate (rad/s).
    pub fn sigma(&self) -> f64 {
        bias_sigma(&self.p)
    }

    /// Overrides the estimate, e.g. with a calibration value. Every bias
    /// component must be within the clip limit and `sigma` positive.
    pub fn set_estimate(&mut self, bias: Vec3, sigma: f64) -> Result<(), VqfError> {
        if !bias.is_finite()
            || bias.x.abs() > self.clip
            || bias.y.abs() > self.clip
            || bias.z.abs() > self.clip
        {
            return Err(VqfError::InvalidParam {
                field: "bias",
                reason: "components must be finite and within the clip limit",
            });
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "sigma",
                reason: "must be positive and finite",
            });
        }
        self.bias = bias;
        self.p = Mat3::scaled_identity(sigma * sigma);
        Ok(())
    }
}

/// Detects rest phases from the deviation of the raw gyroscope and
/// accelerometer samples against their low-pass filtered values.
#[derive(Debug, Clone, PartialEq)]
pub struct RestDetector {
    ts: f64,
    th_gyr: f64,
    th_acc: f64,
    min_time: f64,
    coeffs: ButterCoeffs,
    gyr_lp: [LpfState; 3],
    acc_lp: [LpfState; 3],
    last_gyr_lp: Vec3,
    t_rest: f64,
}

impl RestDetector {
    /// Creates a detector. `filter_tau` is the time constant of the internal
    /// low-pass filters, `th_gyr` (rad/s) and `th_acc` (m/s²) the deviation
    /// thresholds, and `min_time` how long both deviations must stay below
    /// their thresholds before rest is reported.
    pub fn new(
        ts: f64,
        filter_tau: f64,
        th_gyr: f64,
        th_acc: f64,
        min_time: f64,
    ) -> Result<RestDetector, VqfError> {
        let coeffs = ButterCoeffs::design(filter_tau, ts).map_err(|_| VqfError::InvalidParam {
            field: "rest_filter_tau",
            reason: "must be positive with a cutoff below Nyquist",
        })?;
        if !(th_gyr > 0.0) || !(th_acc > 0.0) {
            return Err(VqfError::InvalidParam {
                field: "rest_th_gyr",
                reason: "thresholds must be positive",
            });
        }
        if !(min_time > 0.0) || !min_time.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "rest_min_time",
                reason: "must be positive and finite",
            });
        }
        Ok(RestDetector {
            ts,
            th_gyr,
            th_acc,
            min_time,
            coeffs,
            gyr_lp: [LpfState::new(filter_tau, ts); 3],
            acc_lp: [LpfState::new(filter_tau, ts); 3],
            last_gyr_lp: Vec3::ZERO,
            t_rest: 0.0,
        })
    }

    /// Processes one sample pair and returns whether the sensor has been at
    /// rest for at least `min_time`. Non-finite input resets the rest timer
    /// and reports no rest; the filter states are left untouched so a later
    /// valid sample continues cleanly.
    pub fn step(&mut self, gyr: Vec3, acc: Vec3) -> bool {
        if !gyr.is_finite() || !acc.is_finite() {
            self.t_rest = 0.0;
            return false;
        }
        let gyr_lp = crate::lowpass::step_vec3(&mut self.gyr_lp, &self.coeffs, gyr);
        let acc_lp = crate::lowpass::step_vec3(&mut self.acc_lp, &self.coeffs, acc);
        self.last_gyr_lp = gyr_lp;
        if (gyr - gyr_lp).norm() >= self.th_gyr || (acc - acc_lp).norm() >= self.th_acc {
            self.t_rest = 0.0;
        } else {
            self.t_rest += self.ts;
        }
        self.is_at_rest()
    }

    /// Whether the most recent sample concluded a rest phase of at least
    /// `min_time`.
    pub fn is_at_rest(&self) -> bool {
        self.t_rest >= self.min_time
    }

    /// Low-pass filtered gyroscope reading of the most recent sample; this
    /// is the bias measurement used during rest.
    pub fn gyr_lp(&self) -> Vec3 {
        self.last_gyr_lp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TS: f64 = 0.01;

    fn default_noise() -> KalmanNoise {
        kalman_noise(TS, 100.0, 0.1 * DEG, 0.03 * DEG, 0.5 * DEG).unwrap()
    }

    fn default_kalman() -> BiasKalman {
        BiasKalman::new(TS, 3.0, default_noise(), 0.0001, 2.0 * DEG).unwrap()
    }

    #[test]
    fn noise_values_match_closed_form() {
        let n = default_noise();
        let dps2 = DEG * DEG; // (deg/s)² in (rad/s)²
        assert!((n.v / dps2 - 1e-6).abs() < 1e-18);
        assert!((n.w_motion / dps2 - 100.01).abs() < 1e-9);
        assert!((n.w_rest / dps2 - 0.8109).abs() < 1e-10);
        assert!((n.p0 / dps2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn noise_parameter_validation() {
        assert!(kalman_noise(0.0, 100.0, 0.1, 0.03, 0.5).is_err());
        assert!(kalman_noise(TS, 0.0, 0.1, 0.03, 0.5).is_err());
        assert!(kalman_noise(TS, 100.0, 0.0, 0.03, 0.5).is_err());
        assert!(kalman_noise(TS, 100.0, 0.1, 0.03, -1.0).is_err());
    }

    #[test]
    fn sigma_grows_to_forgetting_rate_without_updates() {
        let noise = KalmanNoise { p0: 0.0, ..default_noise() };
        let mut kf = BiasKalman::new(TS, 3.0, noise, 0.0001, 2.0 * DEG).unwrap();
        for _ in 0..10_000 {
            kf.predict();
        }
        // 100 s of forgetting from zero reaches exactly 0.1 deg/s.
        assert!((kf.sigma() / DEG - 0.1).abs() < 0.001);
    }

    #[test]
    fn rest_updates_converge_to_the_bias_and_rest_sigma() {
        let mut kf = default_kalman();
        let bias_true = Vec3::new(0.5 * DEG, -0.3 * DEG, 0.2 * DEG);
        // The steady-state gain is ~1.1e-3 per step, so the residual shrinks
        // by e^-1.1 per 1000 steps once the covariance has settled.
        for _ in 0..10_000 {
            kf.step(Quaternion::IDENTITY, Vec3::Z, bias_true, true).unwrap();
        }
        assert!((kf.bias() - bias_true).norm() / DEG < 1e-6);
        assert!((kf.sigma() / DEG - 0.03).abs() < 0.0015);
    }

    #[test]
    fn motion_updates_converge_horizontal_sigma() {
        let mut kf = default_kalman();
        // The vertical variance approaches its fixed point sqrt(v*w_z) with
        // a rate of v/sqrt(v*w_z) ~ 1e-6 per step, so this needs a long run.
        for _ in 0..1_500_000 {
            kf.step(Quaternion::IDENTITY, Vec3::Z, Vec3::ZERO, false).unwrap();
        }
        let p = kf.covariance();
        let sx = p.0[0][0].sqrt() / DEG;
        let sy = p.0[1][1].sqrt() / DEG;
        assert!((sx - 0.1).abs() < 0.005, "sigma_x = {sx}");
        assert!((sy - 0.1).abs() < 0.005, "sigma_y = {sy}");
        // The vertical component is only weakly observed and settles near
        // 1 deg/s.
        let sz = p.0[2][2].sqrt() / DEG;
        assert!(sz > 0.9 && sz < 1.1, "sigma_z = {sz}");
    }

    #[test]
    fn rest_adopts_a_step_faster_than_motion() {
        let bias_true = 1.0 * DEG;
        let adoption_steps = |at_rest: bool| -> usize {
            let mut kf = default_kalman();
            kf.set_estimate(Vec3::ZERO, 0.1 * DEG).unwrap();
            // During motion the same effective bias measurement is delivered
            // through the inclination drift term.
            let a_y = -TS * bias_true;
            let acc = Vec3::new(0.0, a_y, (1.0 - a_y * a_y).sqrt());
            for k in 1..200_000 {
                if at_rest {
                    kf.step(Quaternion::IDENTITY, Vec3::Z, Vec3::new(bias_true, 0.0, 0.0), true)
                        .unwrap();
                } else {
                    kf.step(Quaternion::IDENTITY, acc, Vec3::ZERO, false).unwrap();
                }
                if kf.bias().x >= 0.63 * bias_true {
                    return k;
                }
            }
            panic!("no adoption");
        };
        let rest_steps = adoption_steps(true);
        let motion_steps = adoption_steps(false);
        assert!(
            rest_steps < motion_steps,
            "rest {rest_steps} vs motion {motion_steps}"
        );
    }

    #[test]
    fn innovation_and_estimate_are_clipped() {
        let mut kf = default_kalman();
        for _ in 0..20_000 {
            kf.step(
                Quaternion::IDENTITY,
                Vec3::Z,
                Vec3::new(10.0 * DEG, -8.0 * DEG, 5.0 * DEG),
                true,
            )
            .unwrap();
            let b = kf.bias();
            assert!(b.x.abs() <= 2.0 * DEG + 1e-15);
            assert!(b.y.abs() <= 2.0 * DEG + 1e-15);
            assert!(b.z.abs() <= 2.0 * DEG + 1e-15);
        }
        // The estimate saturates at the clip limit, not at the measurement.
        assert!((kf.bias().x - 2.0 * DEG).abs() < 1e-9);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut kf = default_kalman();
        for k in 0..2_000 {
            let t = k as f64 * TS;
            let q = Quaternion::from_angle_axis(0.9 * t, Vec3::new(0.3, 0.5, 0.8));
            let a = q.rotate(Vec3::Z).normalized().unwrap();
            kf.step(q, a, Vec3::new(0.01, -0.02, 0.015), k % 7 == 0).unwrap();
            let p = kf.covariance();
            assert_eq!(p, p.symmetrized());
            for v in [
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.4, -0.6, 0.7),
                Vec3::new(-0.3, 0.9, 0.1),
            ] {
                assert!(v.dot(p.mul_vec(v)) >= -1e-12);
            }
        }
    }

    #[test]
    fn set_estimate_validates_inputs() {
        let mut kf = default_kalman();
        assert!(kf.set_estimate(Vec3::new(3.0 * DEG, 0.0, 0.0), 0.1 * DEG).is_err());
        assert!(kf.set_estimate(Vec3::ZERO, 0.0).is_err());
        kf.set_estimate(Vec3::new(1.0 * DEG, 0.0, 0.0), 0.2 * DEG).unwrap();
        assert!((kf.sigma() - 0.2 * DEG).abs() < 1e-15);
    }

    #[test]
    fn gershgorin_sigma_bounds_diagonal() {
        let p = Mat3([[4.0, 1.0, 0.5], [1.0, 2.0, -0.25], [0.5, -0.25, 1.0]]);
        let s = bias_sigma(&p);
        assert!((s - 5.5f64.sqrt()).abs() < 1e-15);
        for i in 0..3 {
            assert!(s * s >= p.0[i][i]);
        }
    }

    #[test]
    fn rest_detected_after_min_time() {
        let mut det = RestDetector::new(TS, 0.5, 2.0 * DEG, 0.5, 1.5).unwrap();
        let gyr = Vec3::new(0.1 * DEG, -0.05 * DEG, 0.02 * DEG);
        let acc = Vec3::new(0.02, -0.01, 9.81);
        for k in 1..=149 {
            assert!(!det.step(gyr, acc), "rest too early at step {k}");
        }
        assert!(det.step(gyr, acc));
        assert!((det.gyr_lp() - gyr).norm() < 1e-6);
    }

    #[test]
    fn deviation_spike_resets_the_timer() {
        let mut det = RestDetector::new(TS, 0.5, 2.0 * DEG, 0.5, 1.5).unwrap();
        let acc = Vec3::new(0.0, 0.0, 9.81);
        for _ in 0..200 {
            det.step(Vec3::ZERO, acc);
        }
        assert!(det.is_at_rest());
        // 3 deg/s against a settled zero filter exceeds the 2 deg/s bound.
        assert!(!det.step(Vec3::new(3.0 * DEG, 0.0, 0.0), acc));
        for k in 1..=148 {
            assert!(!det.step(Vec3::ZERO, acc), "step {k}");
        }
        for _ in 0..10 {
            det.step(Vec3::ZERO, acc);
        }
        assert!(det.is_at_rest());
    }

    #[test]
    fn acceleration_deviation_blocks_rest() {
        let mut det = RestDetector::new(TS, 0.5, 2.0 * DEG, 0.5, 1.5).unwrap();
        for k in 0..400 {
            // 1 m/s² square wave at 2 Hz keeps the deviation high.
            let a = if (k / 25) % 2 == 0 { 10.3 } else { 9.3 };
            assert!(!det.step(Vec3::ZERO, Vec3::new(0.0, 0.0, a)));
        }
    }

    #[test]
    fn constant_rate_counts_as_rest() {
        // The criterion is deviation-based: a perfectly constant rate matches
        // its own filtered value, so it is classified as rest.
        let mut det = RestDetector::new(TS, 0.5, 2.0 * DEG, 0.5, 1.5).unwrap();
        let gyr = Vec3::new(10.0 * DEG, 0.0, 0.0);
        let acc = Vec3::new(0.0, 0.0, 9.81);
        let mut rest = false;
        for _ in 0..300 {
            rest = det.step(gyr, acc);
        }
        assert!(rest);
    }

    #[test]
    fn non_finite_sample_resets_rest() {
        let mut det = RestDetector::new(TS, 0.5, 2.0 * DEG, 0.5, 1.5).unwrap();
        let acc = Vec3::new(0.0, 0.0, 9.81);
        for _ in 0..200 {
            det.step(Vec3::ZERO, acc);
        }
        assert!(det.is_at_rest());
        assert!(!det.step(Vec3::new(f64::NAN, 0.0, 0.0), acc));
        assert!(!det.is_at_rest());
    }
}
