//! Basic orientation filter: gyroscope strapdown integration, accelerometer
//! inclination correction and magnetometer heading correction.
//!
//! The estimate is kept in three decoupled parts,
//!
//! ```text
//! q_9d = heading(delta) ⊗ q_ie ⊗ q_si
//! ```
//!
//! where `q_si` is the pure strapdown orientation, `q_ie` the accelerometer
//! inclination correction and `delta` a heading offset about the vertical.
//! Gyroscope and accelerometer updates never read `delta`, so the 6D
//! estimate `q_ie ⊗ q_si` is bit-identical whether or not magnetometer data
//! is processed.

use crate::error::VqfError;
use crate::lowpass::{exp_smoothing_gain, step_vec3, ButterCoeffs, LpfState};
use crate::quat::{wrap_to_pi, Quaternion, Vec3};

/// Quaternion that rotates the unit vector `a` onto `[0, 0, 1]`.
///
/// `a` must be normalized. Close to the singularity `a = [0, 0, -1]` the
/// scalar part is clamped to 1e-6 and the result renormalized, which keeps
/// the correction finite; any measurable horizontal component then still
/// converges to the upright solution.
pub(crate) fn inclination_correction(a: Vec3) -> Quaternion {
    let w = ((a.z + 1.0) * 0.5).max(0.0).sqrt().max(1e-6);
    Quaternion::new(w, a.y / (2.0 * w), -a.x / (2.0 * w), 0.0).normalized()
}

/// Basic orientation filter without bias estimation or magnetic disturbance
/// handling.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicVqf {
    ts: f64,
    acc_coeffs: ButterCoeffs,
    k_mag: f64,
    mag_init_len: u64,

    quat_si: Quaternion,
    quat_ie: Quaternion,
    delta: f64,
    acc_lp: [LpfState; 3],
    last_acc_lp: Option<Vec3>,
    last_acc_earth: Option<Vec3>,
    mag_count: u64,
}

impl BasicVqf {
    /// Creates a filter for sampling time `ts` with accelerometer time
    /// constant `tau_acc` and magnetometer time constant `tau_mag` (both in
    /// seconds).
    pub fn new(ts: f64, tau_acc: f64, tau_mag: f64) -> Result<BasicVqf, VqfError> {
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(VqfError::InvalidParam { field: "ts", reason: "must be positive and finite" });
        }
        let acc_coeffs = ButterCoeffs::design(tau_acc, ts).map_err(|_| VqfError::InvalidParam {
            field: "tau_acc",
            reason: "must be positive with a cutoff below Nyquist",
        })?;
        let k_mag = exp_smoothing_gain(tau_mag, ts).map_err(|_| VqfError::InvalidParam {
            field: "tau_mag",
            reason: "must be positive and finite",
        })?;
        Ok(BasicVqf {
            ts,
            acc_coeffs,
            k_mag,
            mag_init_len: (1.0 / k_mag).ceil() as u64,
            quat_si: Quaternion::IDENTITY,
            quat_ie: Quaternion::IDENTITY,
            delta: 0.0,
            acc_lp: [LpfState::new(tau_acc, ts); 3],
            last_acc_lp: None,
            last_acc_earth: None,
            mag_count: 0,
        })
    }

    /// Strapdown integration of one gyroscope sample (rad/s).
    pub fn update_gyr(&mut self, gyr: Vec3) -> Result<(), VqfError> {
        if !gyr.is_finite() {
            return Err(VqfError::NonFiniteSample);
        }
        let norm = gyr.norm();
        if norm > 0.0 {
            let step = Quaternion::from_angle_axis(self.ts * norm, gyr);
            self.quat_si = (self.quat_si * step).normalized();
        }
        Ok(())
    }

    /// Inclination correction from one accelerometer sample (m/s²).
    ///
    /// A zero sample carries no direction and is skipped. The sample is
    /// low-pass filtered in the almost-inertial frame, rotated up by
    /// `quat_ie` and the correction fully aligns the filtered direction with
    /// the vertical.
    pub fn update_acc(&mut self, acc: Vec3) -> Result<(), VqfError> {
        if !acc.is_finite() {
            return Err(VqfError::NonFiniteSample);
        }
        if acc.dot(acc) == 0.0 {
            return Ok(());
        }
        let acc_ii = self.quat_si.rotate(acc);
        let acc_lp = step_vec3(&mut self.acc_lp, &self.acc_coeffs, acc_ii);
        let acc_earth = self.quat_ie.rotate(acc_lp);
        let Some(a) = acc_earth.normalized() else {
            return Ok(());
        };
        self.quat_ie = (inclination_correction(a) * self.quat_ie).normalized();
        self.last_acc_lp = Some(acc_lp);
        self.last_acc_earth = Some(a);
        Ok(())
    }

    /// Heading correction from one magnetometer sample (any unit).
    pub fn update_mag(&mut self, mag: Vec3) -> Result<(), VqfError> {
        self.update_mag_scaled(mag, 1.0)
    }

    /// Heading correction with the filter gain scaled by `scale` (used for
    /// magnetic disturbance rejection). `scale = 0` leaves the heading
    /// unchanged while still consuming the sample.
    pub(crate) fn update_mag_scaled(&mut self, mag: Vec3, scale: f64) -> Result<(), VqfError> {
        if !mag.is_finite() {
            return Err(VqfError::NonFiniteSample);
        }
        if mag.dot(mag) == 0.0 {
            return Ok(());
        }
        let mag_earth = self.quat_6d().rotate(mag);
        if mag_earth.x.hypot(mag_earth.y) < 1e-12 {
            // No horizontal component: the field carries no heading.
            return Ok(());
        }
        let delta_mag = mag_earth.x.atan2(mag_earth.y);
        self.mag_count += 1;
        // During the first ceil(1/k_mag) updates the heading behaves like a
        // cumulative average of the measurements (gains 1, 1/2, 1/3, ...),
        // which removes the slow initial convergence of the fixed gain.
        let k = if self.mag_count <= self.mag_init_len {
            self.k_mag.max(1.0 / self.mag_count as f64)
        } else {
            self.k_mag
        };
        self.delta = wrap_to_pi(self.delta + scale * k * wrap_to_pi(delta_mag - self.delta));
        Ok(())
    }

    /// Processes one sample of all sensors and returns `(quat_6d, quat_9d)`.
    /// Non-finite input leaves the state untouched.
    pub fn update(
        &mut self,
        gyr: Vec3,
        acc: Vec3,
        mag: Option<Vec3>,
    ) -> Result<(Quaternion, Quaternion), VqfError> {
        if !gyr.is_finite() || !acc.is_finite() || !mag.map_or(true, Vec3::is_finite) {
            return Err(VqfError::NonFiniteSample);
        }
        self.update_gyr(gyr)?;
        self.update_acc(acc)?;
        if let Some(m) = mag {
            self.update_mag(m)?;
        }
        Ok((self.quat_6d(), self.quat_9d()))
    }

    /// Magnetometer-free orientation estimate (sensor to earth, heading
    /// relative to the initial strapdown heading).
    pub fn quat_6d(&self) -> Quaternion {
        self.quat_ie * self.quat_si
    }

    /// Full orientation estimate including the magnetic heading.
    pub fn quat_9d(&self) -> Quaternion {
        Quaternion::from_angle_axis(self.delta, Vec3::Z) * self.quat_6d()
    }

    /// Current heading offset `delta` (radians, in `[-π, π]`).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Sampling time in seconds.
    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// Normalized low-pass filtered acceleration in the earth frame from the
    /// most recent accelerometer update, before the correction was applied.
    /// This is the inclination measurement the bias estimator consumes.
    pub(crate) fn last_acc_earth(&self) -> Option<Vec3> {
        self.last_acc_earth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    const DEG: f64 = PI / 180.0;
    const GRAVITY: f64 = 9.81;

    #[test]
    fn strapdown_constant_rate_is_exact() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        let gyr = Vec3::new(0.0, 0.0, 30.0 * DEG);
        for _ in 0..300 {
            f.update_gyr(gyr).unwrap();
        }
        // 3 s at 30 deg/s about z is a quarter turn.
        let q = f.quat_si;
        assert!((q.w - FRAC_1_SQRT_2).abs() < 1e-10);
        assert!(q.x.abs() < 1e-12 && q.y.abs() < 1e-12);
        assert!((q.z - FRAC_1_SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn strapdown_norm_stays_unit() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        for k in 0..10_000 {
            let t = k as f64 * 0.01;
            let gyr = Vec3::new((1.3 * t).sin(), 0.8 * (0.7 * t).cos(), 0.5);
            f.update_gyr(gyr).unwrap();
            assert!((f.quat_si.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gyr_is_identity_step() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        f.update_gyr(Vec3::new(0.3, -0.2, 0.1)).unwrap();
        let before = f.quat_si;
        f.update_gyr(Vec3::ZERO).unwrap();
        assert_eq!(before, f.quat_si);
    }

    #[test]
    fn inclination_correction_quarter_example() {
        let q = inclination_correction(Vec3::new(0.0, 1.0, 0.0));
        assert!((q.w - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((q.x - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(q.y.abs() < 1e-12 && q.z.abs() < 1e-12);
        let up = q.rotate(Vec3::new(0.0, 1.0, 0.0));
        assert!((up - Vec3::Z).norm() < 1e-12);
    }

    #[test]
    fn update_acc_aligns_filtered_acceleration() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        // Static sensor rolled by 30 degrees.
        let q_true = Quaternion::from_angle_axis(30.0 * DEG, Vec3::new(1.0, 0.0, 0.0));
        let acc = q_true.inverse().rotate(Vec3::Z * GRAVITY);
        for _ in 0..200 {
            f.update_acc(acc).unwrap();
            let aligned = f.quat_ie.rotate(f.last_acc_lp.unwrap());
            let a = aligned.normalized().unwrap();
            assert!((a - Vec3::Z).norm() < 1e-8);
        }
    }

    #[test]
    fn static_inclination_converges() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        let q_true = Quaternion::from_angle_axis(40.0 * DEG, Vec3::new(0.6, -0.8, 0.0));
        let acc = q_true.inverse().rotate(Vec3::Z * GRAVITY);
        for _ in 0..1000 {
            f.update(Vec3::ZERO, acc, None).unwrap();
        }
        // The sensed vertical must match: q_6d rotates acc onto +z.
        let up = f.quat_6d().rotate(acc).normalized().unwrap();
        let err = up.dot(Vec3::Z).clamp(-1.0, 1.0).acos();
        assert!(err < 0.05 * DEG, "residual inclination {} deg", err / DEG);
    }

    #[test]
    fn first_mag_update_adopts_measurement() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        f.update_acc(Vec3::Z * GRAVITY).unwrap();
        // Field with heading angle 0.3 rad east of north, dip 68 degrees.
        let (h, v) = ((68.0 * DEG).cos(), (68.0 * DEG).sin());
        let mag = Vec3::new(h * 0.3f64.sin(), h * 0.3f64.cos(), -v) * 50.0;
        f.update_mag(mag).unwrap();
        assert!((f.delta() - 0.3).abs() < 1e-12);
        // Second update sees gain 1/2.
        let mag2 = Vec3::new(h * 0.5f64.sin(), h * 0.5f64.cos(), -v) * 50.0;
        f.update_mag(mag2).unwrap();
        assert!((f.delta() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn mag_init_behaves_like_cumulative_average() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        f.update_acc(Vec3::Z * GRAVITY).unwrap();
        let (h, v) = ((68.0 * DEG).cos(), (68.0 * DEG).sin());
        let headings = [0.10_f64, 0.30, 0.20];
        for psi in headings {
            let mag = Vec3::new(h * psi.sin(), h * psi.cos(), -v) * 50.0;
            f.update_mag(mag).unwrap();
        }
        let mean = headings.iter().sum::<f64>() / headings.len() as f64;
        assert!((f.delta() - mean).abs() < 1e-6);
    }

    #[test]
    fn quat_9d_composes_heading_over_quat_6d() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        for k in 0..300 {
            let t = k as f64 * 0.01;
            let gyr = Vec3::new(0.2 * (2.0 * t).sin(), 0.1, 0.3);
            let acc = Vec3::new(0.3, -0.2, 9.7);
            let mag = Vec3::new(20.0, 30.0, -40.0);
            f.update(gyr, acc, Some(mag)).unwrap();
        }
        let want = Quaternion::from_angle_axis(f.delta(), Vec3::Z) * f.quat_6d();
        let got = f.quat_9d();
        assert!((got.dot(want).abs() - 1.0).abs() < 1e-14);
        assert!(f.delta().abs() <= PI);
    }

    #[test]
    fn six_d_is_independent_of_magnetometer() {
        let mut with_mag = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        let mut without = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        for k in 0..500 {
            let t = k as f64 * 0.01;
            let gyr = Vec3::new((1.1 * t).sin() * 0.8, (0.6 * t).cos() * 0.5, 0.2);
            let acc = Vec3::new((0.5 * t).sin(), 0.1, 9.6);
            let mag = Vec3::new(10.0 + t, 25.0, -41.0);
            with_mag.update(gyr, acc, Some(mag)).unwrap();
            without.update(gyr, acc, None).unwrap();
            // Bitwise identical strapdown and inclination state.
            assert_eq!(with_mag.quat_si, without.quat_si);
            assert_eq!(with_mag.quat_ie, without.quat_ie);
        }
    }

    #[test]
    fn upside_down_stays_finite_and_converges() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        f.update_acc(Vec3::new(0.0, 0.0, -GRAVITY)).unwrap();
        assert!(f.quat_ie.is_finite());
        assert!((f.quat_ie.norm() - 1.0).abs() < 1e-12);
        // With a measurable horizontal component the estimate leaves the
        // singularity and aligns.
        for _ in 0..2000 {
            f.update_acc(Vec3::new(0.5, 0.0, -GRAVITY)).unwrap();
            assert!(f.quat_ie.is_finite());
        }
        let aligned = f.quat_ie.rotate(f.last_acc_lp.unwrap()).normalized().unwrap();
        assert!((aligned - Vec3::Z).norm() < 1e-6);
    }

    #[test]
    fn zero_acc_sample_is_skipped() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        f.update_acc(Vec3::new(0.1, 0.2, 9.8)).unwrap();
        let before = f.clone();
        f.update_acc(Vec3::ZERO).unwrap();
        assert_eq!(before, f);
    }

    #[test]
    fn vertical_mag_field_is_skipped() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        f.update_acc(Vec3::Z * GRAVITY).unwrap();
        let before = f.clone();
        f.update_mag(Vec3::new(0.0, 0.0, -50.0)).unwrap();
        assert_eq!(before, f);
    }

    #[test]
    fn non_finite_sample_leaves_state_untouched() {
        let mut f = BasicVqf::new(0.01, 3.0, 9.0).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.01;
            f.update(Vec3::new(0.1, t.sin(), 0.2), Vec3::new(0.0, 0.3, 9.8), None).unwrap();
        }
        let before = f.clone();
        let bad = f.update(
            Vec3::new(f64::NAN, 0.0, 0.0),
            Vec3::new(0.0, 0.3, 9.8),
            Some(Vec3::new(1.0, f64::INFINITY, 0.0)),
        );
        assert_eq!(bad, Err(VqfError::NonFiniteSample));
        assert_eq!(before, f);
    }

    #[test]
    fn invalid_parameters_name_the_field() {
        match BasicVqf::new(0.0, 3.0, 9.0) {
            Err(VqfError::InvalidParam { field, .. }) => assert_eq!(field, "ts"),
            other => panic!("unexpected: {other:?}"),
        }
        match BasicVqf::new(0.01, -3.0, 9.0) {
            Err(VqfError::InvalidParam { field, .. }) => assert_eq!(field, "tau_acc"),
            other => panic!("unexpected: {other:?}"),
        }
        match BasicVqf::new(0.01, 3.0, 0.0) {
            Err(VqfError::InvalidParam { field, .. }) => assert_eq!(field, "tau_mag"),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
