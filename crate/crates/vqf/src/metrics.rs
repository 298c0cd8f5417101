//! Accuracy metrics for comparing orientation estimates against a
//! reference, with the total error split into heading and inclination.

use crate::error::VqfError;
use crate::quat::{Quaternion, Vec3};

const RAD_TO_DEG: f64 = 180.0 / std::f64::consts::PI;

/// Total rotation angle (degrees) between estimate and reference,
/// independent of quaternion sign.
pub fn quat_error_angle(est: Quaternion, reference: Quaternion) -> f64 {
    let e = est.multiply(reference.inverse());
    2.0 * e.w.abs().min(1.0).acos() * RAD_TO_DEG
}

/// Splits the estimation error into a heading part (rotation about the
/// vertical) and an inclination part (rotation about a horizontal axis),
/// both in degrees within [0, 180]. The split is a swing-twist
/// decomposition of the error quaternion about the z axis, so
/// `cos(total/2) = cos(heading/2) * cos(inclination/2)` holds exactly.
pub fn heading_inclination_split(est: Quaternion, reference: Quaternion) -> (f64, f64) {
    let e = est.multiply(reference.inverse());
    let twist_norm = e.w.hypot(e.z);
    let inclination = 2.0 * twist_norm.min(1.0).acos();
    let mut heading = (2.0 * e.z.atan2(e.w)).abs();
    if heading > std::f64::consts::PI {
        heading = 2.0 * std::f64::consts::PI - heading;
    }
    (heading * RAD_TO_DEG, inclination * RAD_TO_DEG)
}

/// Root-mean-square of the values selected by `mask` (all values when the
/// mask is absent). Fails on length mismatch or when nothing is selected.
pub fn rmse_over_mask(values: &[f64], mask: Option<&[bool]>) -> Result<f64, VqfError> {
    if let Some(mask) = mask {
        if mask.len() != values.len() {
            return Err(VqfError::LengthMismatch { left: values.len(), right: mask.len() });
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, &v) in values.iter().enumerate() {
        if mask.map_or(true, |m| m[k]) {
            sum += v * v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(VqfError::TooShort { got: 0, need: 1 });
    }
    Ok((sum / count as f64).sqrt())
}

/// Root-mean-square residual of a bias estimate series (rad/s) against the
/// true bias, reported in deg/s.
pub fn bias_residual_rms(est: &[Vec3], truth: Vec3) -> Result<f64, VqfError> {
    if est.is_empty() {
        return Err(VqfError::TooShort { got: 0, need: 1 });
    }
    let sum: f64 = est.iter().map(|b| (*b - truth).dot(*b - truth)).sum();
    Ok((sum / est.len() as f64).sqrt() * RAD_TO_DEG)
}

/// Summary of an estimate series compared against a reference series.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// RMS of the total error angle (deg).
    pub orientation_rmse: f64,
    /// RMS of the inclination component (deg).
    pub inclination_rmse: f64,
    /// RMS of the heading component (deg).
    pub heading_rmse: f64,
    /// RMS bias residual (deg/s), when a bias series and truth were given.
    pub bias_residual_rms: Option<f64>,
    /// Number of samples not flagged as rest (all samples when no rest
    /// information was given).
    pub motion_samples: usize,
    /// Number of samples flagged as rest.
    pub rest_samples: usize,
}

impl ErrorReport {
    /// Compares estimates against a reference of equal length. The angle
    /// RMSEs follow the motion-phase convention: samples flagged as rest
    /// are excluded when a rest mask is given (all samples are used when
    /// the mask is absent or marks everything as rest). The bias residual
    /// is always taken over the full series.
    pub fn compute(
        est: &[Quaternion],
        reference: &[Quaternion],
        rest: Option<&[bool]>,
        bias: Option<(&[Vec3], Vec3)>,
    ) -> Result<ErrorReport, VqfError> {
        if est.len() != reference.len() {
            return Err(VqfError::LengthMismatch { left: est.len(), right: reference.len() });
        }
        if let Some(rest) = rest {
            if rest.len() != est.len() {
                return Err(VqfError::LengthMismatch { left: est.len(), right: rest.len() });
            }
        }
        let mut total = Vec::with_capacity(est.len());
        let mut heading = Vec::with_capacity(est.len());
        let mut inclination = Vec::with_capacity(est.len());
        for (q, r) in est.iter().zip(reference) {
            total.push(quat_error_angle(*q, *r));
            let (h, i) = heading_inclination_split(*q, *r);
            heading.push(h);
            inclination.push(i);
        }
        let bias_residual_rms = match bias {
            Some((series, truth)) => {
                if series.len() != est.len() {
                    return Err(VqfError::LengthMismatch { left: est.len(), right: series.len() });
                }
                Some(bias_residual_rms(series, truth)?)
            }
            None => None,
        };
        let rest_samples = rest.map_or(0, |r| r.iter().filter(|&&x| x).count());
        let motion_mask: Option<Vec<bool>> = rest.map(|r| r.iter().map(|&x| !x).collect());
        let mask = motion_mask.as_deref().filter(|m| m.iter().any(|&x| x));
        Ok(ErrorReport {
            orientation_rmse: rmse_over_mask(&total, mask)?,
            inclination_rmse: rmse_over_mask(&inclination, mask)?,
            heading_rmse: rmse_over_mask(&heading, mask)?,
            bias_residual_rms,
            motion_samples: est.len() - rest_samples,
            rest_samples,
        })
    }

    /// Serializes as flat `key = value` lines.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("orientation_rmse_deg = {:.6}\n", self.orientation_rmse));
        out.push_str(&format!("inclination_rmse_deg = {:.6}\n", self.inclination_rmse));
        out.push_str(&format!("heading_rmse_deg = {:.6}\n", self.heading_rmse));
        if let Some(b) = self.bias_residual_rms {
            out.push_str(&format!("bias_residual_rms_deg_per_s = {:.6}\n", b));
        }
        out.push_str(&format!("motion_samples = {}\n", self.motion_samples));
        out.push_str(&format!("rest_samples = {}\n", self.rest_samples));
        out
    }
}
