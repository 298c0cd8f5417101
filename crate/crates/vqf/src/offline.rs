//! Offline (whole-recording) orientation estimation.
//!
//! A recording is processed twice with the online filter, once forward and
//! once backward in time, and the two bias estimates are fused per sample
//! by their covariances. The orientation is then rebuilt from the
//! bias-corrected gyroscope with zero-phase accelerometer smoothing, and the
//! heading is filtered forward and backward as well, so the result has no
//! filter lag in either direction.

use crate::basic::inclination_correction;
use crate::bias::bias_sigma;
use crate::error::VqfError;
use crate::filter::{Vqf, VqfParams};
use crate::lowpass::{exp_smoothing_gain, filtfilt};
use crate::quat::{wrap_to_pi, Mat3, Quaternion, Vec3};

/// Result of [`offline_vqf`]; entry `k` corresponds to input sample `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineResult {
    /// Magnetometer-free orientation.
    pub quat_6d: Vec<Quaternion>,
    /// Orientation including the magnetic heading.
    pub quat_9d: Vec<Quaternion>,
    /// Heading offset (rad) between the two, about the vertical.
    pub delta: Vec<f64>,
    /// Fused gyroscope bias estimate (rad/s).
    pub bias: Vec<Vec3>,
    /// Conservative uncertainty of the fused bias (rad/s).
    pub bias_sigma: Vec<f64>,
    /// Rest detected by either the forward or the backward pass.
    pub rest: Vec<bool>,
    /// Magnetic disturbance detected by both passes.
    pub mag_disturbed: Vec<bool>,
}

/// Turns a recording into its time-reversed equivalent: samples in reverse
/// order with negated angular rates. Running any estimator over the result
/// traverses the same trajectory backwards.
pub fn reverse_run_transform(
    gyr: &[Vec3],
    acc: &[Vec3],
    mag: Option<&[Vec3]>,
) -> (Vec<Vec3>, Vec<Vec3>, Option<Vec<Vec3>>) {
    let gyr_rev: Vec<Vec3> = gyr.iter().rev().map(|&g| -g).collect();
    let acc_rev: Vec<Vec3> = acc.iter().rev().copied().collect();
    let mag_rev = mag.map(|m| m.iter().rev().copied().collect());
    (gyr_rev, acc_rev, mag_rev)
}

struct PassRecord {
    bias: Vec<Vec3>,
    cov: Vec<Mat3>,
    rest: Vec<bool>,
    disturbed: Vec<bool>,
}

fn run_pass(
    ts: f64,
    params: &VqfParams,
    gyr: &[Vec3],
    acc: &[Vec3],
    mag: Option<&[Vec3]>,
) -> Result<PassRecord, VqfError> {
    let mut filter = Vqf::new(ts, params.clone())?;
    let n = gyr.len();
    let mut rec = PassRecord {
        bias: Vec::with_capacity(n),
        cov: Vec::with_capacity(n),
        rest: Vec::with_capacity(n),
        disturbed: Vec::with_capacity(n),
    };
    for k in 0..n {
        let r = filter.update(gyr[k], acc[k], mag.map(|m| m[k]))?;
        rec.bias.push(r.bias);
        rec.cov.push(filter.bias_covariance());
        rec.rest.push(r.rest);
        rec.disturbed.push(r.mag_disturbed);
    }
    Ok(rec)
}

/// One causal sweep of the heading filter over measured heading offsets.
/// `None` entries (no usable magnetometer sample) keep the previous state;
/// samples flagged as disturbed are rejected with the same timing rules as
/// online.
fn heading_pass(
    meas: &[Option<f64>],
    disturbed: &[bool],
    ts: f64,
    tau_mag: f64,
    max_rejection_time: f64,
    rejection_factor: f64,
) -> Result<Vec<f64>, VqfError> {
    let k_mag = exp_smoothing_gain(tau_mag, ts)?;
    let mut delta = 0.0;
    let mut t_reject = 0.0_f64;
    let mut count = 0usize;
    let mut out = Vec::with_capacity(meas.len());
    for (k, &m) in meas.iter().enumerate() {
        let scale = if disturbed[k] {
            if t_reject < max_rejection_time {
                t_reject = (t_reject + ts).min(max_rejection_time);
                0.0
            } else {
                1.0 / rejection_factor
            }
        } else {
            t_reject = (t_reject - rejection_factor * ts).max(0.0);
            1.0
        };
        if let Some(m) = m {
            count += 1;
            let gain = k_mag.max(1.0 / count as f64);
            delta = wrap_to_pi(delta + scale * gain * wrap_to_pi(m - delta));
        }
        out.push(delta);
    }
    Ok(out)
}

fn align_signs(quats: &mut [Quaternion]) {
    for k in 1..quats.len() {
        if quats[k].dot(quats[k - 1]) < 0.0 {
            quats[k] = -quats[k];
        }
    }
}

/// Estimates orientation, bias and heading offset for a complete recording.
///
/// Unlike the online filter, every output sample benefits from the whole
/// recording: bias estimates are fused from a forward and a backward run,
/// the inclination smoothing is zero-phase, and the heading filter runs in
/// both directions. Consecutive output quaternions are sign-aligned.
pub fn offline_vqf(
    ts: f64,
    params: &VqfParams,
    gyr: &[Vec3],
    acc: &[Vec3],
    mag: Option<&[Vec3]>,
) -> Result<OfflineResult, VqfError> {
    params.validate()?;
    let n = gyr.len();
    if acc.len() != n {
        return Err(VqfError::LengthMismatch { left: n, right: acc.len() });
    }
    if let Some(m) = mag {
        if m.len() != n {
            return Err(VqfError::LengthMismatch { left: n, right: m.len() });
        }
    }
    if n == 0 {
        return Err(VqfError::TooShort { got: 0, need: 1 });
    }
    for k in 0..n {
        if !gyr[k].is_finite() || !acc[k].is_finite() || !mag.map_or(true, |m| m[k].is_finite()) {
            return Err(VqfError::NonFiniteSample);
        }
    }

    let forward = run_pass(ts, params, gyr, acc, mag)?;
    let (gyr_rev, acc_rev, mag_rev) = reverse_run_transform(gyr, acc, mag);
    let backward = run_pass(ts, params, &gyr_rev, &acc_rev, mag_rev.as_deref())?;

    // Fuse the two bias estimates by covariance. The backward run sees the
    // negated bias, hence the sign. A small diagonal floor keeps the
    // inversions well conditioned.
    let floor = Mat3::scaled_identity(1e-12);
    let mut bias = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut rest = Vec::with_capacity(n);
    let mut disturbed = Vec::with_capacity(n);
    for k in 0..n {
        let j = n - 1 - k;
        let pf_inv = forward.cov[k].add(&floor).inverse();
        let pb_inv = backward.cov[j].add(&floor).inverse();
        match (pf_inv, pb_inv) {
            (Some(a), Some(b)) => {
                let merged = a.add(&b).inverse().unwrap_or(forward.cov[k]);
                let info = a.mul_vec(forward.bias[k]) - b.mul_vec(backward.bias[j]);
                bias.push(merged.mul_vec(info));
                sigma.push(bias_sigma(&merged));
            }
            _ => {
                bias.push(forward.bias[k]);
                sigma.push(bias_sigma(&forward.cov[k]));
            }
        }
        rest.push(forward.rest[k] || backward.rest[j]);
        disturbed.push(forward.disturbed[k] && backward.disturbed[j]);
    }

    // Strapdown with the fused bias.
    let mut quat_si = Vec::with_capacity(n);
    let mut q = Quaternion::IDENTITY;
    for k in 0..n {
        let w = gyr[k] - bias[k];
        let angle = ts * w.norm();
        if angle > 0.0 {
            q = q.multiply(Quaternion::from_angle_axis(angle, w)).normalized();
        }
        quat_si.push(q);
    }

    // Zero-phase inclination smoothing, then a single alignment sweep.
    let mut chan = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for k in 0..n {
        let a = quat_si[k].rotate(acc[k]);
        chan[0].push(a.x);
        chan[1].push(a.y);
        chan[2].push(a.z);
    }
    let fx = filtfilt(&chan[0], params.tau_acc, ts)?;
    let fy = filtfilt(&chan[1], params.tau_acc, ts)?;
    let fz = filtfilt(&chan[2], params.tau_acc, ts)?;

    let mut quat_6d = Vec::with_capacity(n);
    let mut q_ie = Quaternion::IDENTITY;
    for k in 0..n {
        let a = q_ie.rotate(Vec3::new(fx[k], fy[k], fz[k]));
        if let Some(unit) = a.normalized() {
            q_ie = inclination_correction(unit).multiply(q_ie).normalized();
        }
        quat_6d.push(q_ie.multiply(quat_si[k]));
    }

    // Heading: filter the measured offsets forward, then the forward result
    // backward, for zero phase overall.
    let delta = if let Some(mag) = mag {
        let mut meas = Vec::with_capacity(n);
        for k in 0..n {
            let m = mag[k];
            if m.dot(m) > 0.0 {
                let e = quat_6d[k].rotate(m);
                let horizontal = e.x.hypot(e.y);
                meas.push((horizontal >= 1e-12).then(|| e.x.atan2(e.y)));
            } else {
                meas.push(None);
            }
        }
        let fwd = heading_pass(
            &meas,
            &disturbed,
            ts,
            params.tau_mag,
            params.mag_max_rejection_time,
            params.mag_rejection_factor,
        )?;
        let meas_rev: Vec<Option<f64>> = fwd.iter().rev().map(|&d| Some(d)).collect();
        let dist_rev: Vec<bool> = disturbed.iter().rev().copied().collect();
        let mut bwd = heading_pass(
            &meas_rev,
            &dist_rev,
            ts,
            params.tau_mag,
            params.mag_max_rejection_time,
            params.mag_rejection_factor,
        )?;
        bwd.reverse();
        bwd
    } else {
        vec![0.0; n]
    };

    let mut quat_9d = Vec::with_capacity(n);
    for k in 0..n {
        quat_9d.push(Quaternion::from_angle_axis(delta[k], Vec3::Z).multiply(quat_6d[k]));
    }
    align_signs(&mut quat_6d);
    align_signs(&mut quat_9d);

    Ok(OfflineResult { quat_6d, quat_9d, delta, bias, bias_sigma: sigma, rest, mag_disturbed: disturbed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Disturbance, MagFieldSpec, MotionProfile, Segment, TrajectorySpec};

    const TS: f64 = 0.01;
    const DEG: f64 = std::f64::consts::PI / 180.0;

    fn tumble() -> MotionProfile {
        MotionProfile::Sinusoid {
            offset: Vec3::new(0.2, -0.15, 0.25),
            amplitude: Vec3::new(0.9, 0.7, 0.5),
            frequency: 0.9,
            phase: Vec3::new(0.0, 1.2, 2.1),
        }
    }

    fn trial(bias: Vec3, seed: u64) -> TrajectorySpec {
        TrajectorySpec {
            segments: vec![
                Segment { duration: 5.0, angular_rate: MotionProfile::default(), linear_acc: MotionProfile::default() },
                Segment { duration: 30.0, angular_rate: tumble(), linear_acc: MotionProfile::default() },
                Segment { duration: 5.0, angular_rate: MotionProfile::default(), linear_acc: MotionProfile::default() },
            ],
            gyro_bias: bias,
            noise_gyr: 0.002,
            noise_acc: 0.03,
            noise_mag: 0.3,
            mag_field: Some(MagFieldSpec { norm: 50.0, dip_deg: 68.0 }),
            disturbances: vec![],
            seed,
        }
    }

    fn unpack(samples: &[crate::synth::ImuSample]) -> (Vec<Vec3>, Vec<Vec3>, Vec<Vec3>) {
        let gyr = samples.iter().map(|s| s.gyr).collect();
        let acc = samples.iter().map(|s| s.acc).collect();
        let mag = samples.iter().map(|s| s.mag.unwrap()).collect();
        (gyr, acc, mag)
    }

    #[test]
    fn reverse_transform_reverses_and_negates() {
        let gyr = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.0, 0.5)];
        let acc = vec![Vec3::new(0.0, 0.0, 9.81), Vec3::new(0.1, 0.2, 9.7)];
        let (g, a, m) = reverse_run_transform(&gyr, &acc, None);
        assert_eq!(g, vec![Vec3::new(1.0, 0.0, -0.5), Vec3::new(-1.0, -2.0, -3.0)]);
        assert_eq!(a, vec![acc[1], acc[0]]);
        assert!(m.is_none());
        let mag = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let (_, _, m) = reverse_run_transform(&gyr, &acc, Some(&mag));
        assert_eq!(m.unwrap(), vec![mag[1], mag[0]]);
    }

    #[test]
    fn input_validation() {
        let params = VqfParams::default();
        let g = vec![Vec3::ZERO; 10];
        let a = vec![Vec3::new(0.0, 0.0, 9.81); 10];
        assert!(matches!(
            offline_vqf(TS, &params, &g, &a[..9], None),
            Err(VqfError::LengthMismatch { .. })
        ));
        assert!(matches!(
            offline_vqf(TS, &params, &[], &[], None),
            Err(VqfError::TooShort { .. })
        ));
        let mut bad = g.clone();
        bad[5].x = f64::NAN;
        assert_eq!(offline_vqf(TS, &params, &bad, &a, None), Err(VqfError::NonFiniteSample));
        let m = vec![Vec3::new(0.0, 50.0, 0.0); 9];
        assert!(matches!(
            offline_vqf(TS, &params, &g, &a, Some(&m)),
            Err(VqfError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn without_mag_the_two_estimates_coincide() {
        let (samples, _) = generate(&trial(Vec3::ZERO, 3), TS).unwrap();
        let (gyr, acc, _) = unpack(&samples);
        let res = offline_vqf(TS, &VqfParams::default(), &gyr, &acc, None).unwrap();
        assert!(res.delta.iter().all(|&d| d == 0.0));
        for k in 0..gyr.len() {
            assert_eq!(res.quat_9d[k], res.quat_6d[k]);
        }
    }

    #[test]
    fn fused_bias_is_known_from_the_first_sample() {
        let bias = Vec3::new(0.8 * DEG, -0.6 * DEG, 0.4 * DEG);
        let (samples, _) = generate(&trial(bias, 4), TS).unwrap();
        let (gyr, acc, mag) = unpack(&samples);
        let res = offline_vqf(TS, &VqfParams::default(), &gyr, &acc, Some(&mag)).unwrap();
        // The backward pass has already observed the whole recording, so
        // even the first fused estimates are close to the truth.
        let early = (res.bias[0] - bias).norm() / DEG;
        assert!(early < 0.15, "first fused bias off by {early} deg/s");
        let mid = (res.bias[res.bias.len() / 2] - bias).norm() / DEG;
        assert!(mid < 0.1, "mid fused bias off by {mid} deg/s");
        // An online run starts from zero instead.
        let mut online = Vqf::new(TS, VqfParams::default()).unwrap();
        let first = online.update(gyr[0], acc[0], Some(mag[0])).unwrap();
        assert!((first.bias - bias).norm() / DEG > 0.5);
    }

    #[test]
    fn offline_is_at_least_as_accurate_as_online() {
        let bias = Vec3::new(-0.5 * DEG, 0.9 * DEG, 0.3 * DEG);
        let spec = trial(bias, 5);
        let (samples, truth) = generate(&spec, TS).unwrap();
        let (gyr, acc, mag) = unpack(&samples);
        let params = VqfParams::default();

        let res = offline_vqf(TS, &params, &gyr, &acc, Some(&mag)).unwrap();
        let mut online = Vqf::new(TS, params.clone()).unwrap();
        let mut err_off = 0.0;
        let mut err_on = 0.0;
        for k in 0..gyr.len() {
            let rec = online.update(gyr[k], acc[k], Some(mag[k])).unwrap();
            // Compare 6D estimates against truth with the heading removed,
            // via the inclination component only.
            let (_, inc_off) =
                crate::metrics::heading_inclination_split(res.quat_6d[k], truth.quat[k]);
            let (_, inc_on) =
                crate::metrics::heading_inclination_split(rec.quat_6d, truth.quat[k]);
            err_off += inc_off * inc_off;
            err_on += inc_on * inc_on;
        }
        let rmse_off = (err_off / gyr.len() as f64).sqrt();
        let rmse_on = (err_on / gyr.len() as f64).sqrt();
        assert!(
            rmse_off <= rmse_on,
            "offline inclination RMSE {rmse_off} deg vs online {rmse_on} deg"
        );
    }

    #[test]
    fn rest_is_recognized_from_the_first_sample() {
        let (samples, _) = generate(&trial(Vec3::ZERO, 6), TS).unwrap();
        let (gyr, acc, mag) = unpack(&samples);
        let res = offline_vqf(TS, &VqfParams::default(), &gyr, &acc, Some(&mag)).unwrap();
        // The forward pass needs rest_min_time before it can flag rest, but
        // the backward pass covers the start of the recording.
        assert!(res.rest[0], "rest not flagged at the first sample");
        assert!(res.rest[10]);
        // Deep inside the motion segment nothing is flagged.
        let mid = res.rest.len() / 2;
        assert!(!res.rest[mid]);
    }

    #[test]
    fn disturbance_flags_cover_the_window_from_both_sides() {
        let mut spec = trial(Vec3::ZERO, 7);
        spec.disturbances = vec![Disturbance {
            start: 15.0,
            duration: 8.0,
            delta_field: Vec3::new(25.0, -10.0, 15.0),
        }];
        let (samples, _) = generate(&spec, TS).unwrap();
        let (gyr, acc, mag) = unpack(&samples);
        let res = offline_vqf(TS, &VqfParams::default(), &gyr, &acc, Some(&mag)).unwrap();
        let at = |t: f64| ((t / TS) as usize).min(res.mag_disturbed.len() - 1);
        // Inside the window both passes agree on the disturbance; the merged
        // flag therefore covers it almost edge to edge.
        assert!(res.mag_disturbed[at(16.0)]);
        assert!(res.mag_disturbed[at(19.0)]);
        assert!(res.mag_disturbed[at(22.5)]);
        // Clean stretches away from the window stay unflagged.
        assert!(!res.mag_disturbed[at(10.0)]);
        assert!(!res.mag_disturbed[at(30.0)]);
    }

    #[test]
    fn output_quaternions_are_sign_continuous() {
        // A static sensor in a world whose field slowly rotates through a
        // full turn: the heading offset sweeps across the +-pi boundary,
        // which would flip the 9D quaternion sign without alignment.
        let n = 30_000;
        let mut gyr = Vec::with_capacity(n);
        let mut acc = Vec::with_capacity(n);
        let mut mag = Vec::with_capacity(n);
        for k in 0..n {
            let psi = 2.2 * std::f64::consts::PI * k as f64 / n as f64;
            gyr.push(Vec3::ZERO);
            acc.push(Vec3::new(0.0, 0.0, 9.81));
            let (s, c) = psi.sin_cos();
            // World field rotated by psi about z, sensor frame = world frame.
            mag.push(Vec3::new(-18.73 * s, 18.73 * c, -46.36));
        }
        let params = VqfParams { mag_dist_rejection: false, ..VqfParams::default() };
        let res = offline_vqf(TS, &params, &gyr, &acc, Some(&mag)).unwrap();
        for k in 1..n {
            assert!(
                res.quat_9d[k].dot(res.quat_9d[k - 1]) >= 0.0,
                "sign flip at sample {k}"
            );
            assert!(res.quat_6d[k].dot(res.quat_6d[k - 1]) >= 0.0);
        }
        assert!(res.delta.iter().all(|&d| (-std::f64::consts::PI..=std::f64::consts::PI).contains(&d)));
    }
}
