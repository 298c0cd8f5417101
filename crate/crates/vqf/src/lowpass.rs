//! Second-order Butterworth low-pass filtering parameterized by a time
//! constant, plus the first-order exponential smoothing gain and zero-phase
//! forward/backward filtering for offline use.
//!
//! The time constant `tau` of the second-order filter is mapped to the cutoff
//! frequency `fc = √2 / (2π·tau)`, which makes its step response comparable
//! to a first-order filter with the same `tau`. Filters start in an
//! initialization phase that outputs the running mean of the input; once
//! `tau` seconds of samples have been consumed, the delay registers are set
//! to the steady state of that mean and regular IIR filtering begins. This
//! avoids long initial transients without requiring a warm-up period.

use std::f64::consts::{PI, SQRT_2};

use crate::error::VqfError;
use crate::quat::Vec3;

/// Cutoff frequency (Hz) of the second-order filter equivalent to time
/// constant `tau` (seconds).
pub fn cutoff_from_tau(tau: f64) -> f64 {
    SQRT_2 / (2.0 * PI * tau)
}

/// Gain of a first-order exponential smoothing filter with time constant
/// `tau`, sampled at `ts`: `k = 1 - exp(-ts/tau)`.
pub fn exp_smoothing_gain(tau: f64, ts: f64) -> Result<f64, VqfError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(VqfError::InvalidParam { field: "tau", reason: "must be positive and finite" });
    }
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(VqfError::InvalidParam { field: "ts", reason: "must be positive and finite" });
    }
    Ok(1.0 - (-ts / tau).exp())
}

/// Coefficients of a discrete second-order Butterworth low-pass filter,
/// normalized so the output recursion is
/// `y[n] = b0·x[n] + b1·x[n-1] + b2·x[n-2] - a1·y[n-1] - a2·y[n-2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButterCoeffs {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl ButterCoeffs {
    /// Designs the filter for time constant `tau` sampled at `ts` via the
    /// bilinear transform with frequency prewarping.
    pub fn design(tau: f64, ts: f64) -> Result<ButterCoeffs, VqfError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "tau",
                reason: "must be positive and finite",
            });
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(VqfError::InvalidParam {
                field: "ts",
                reason: "must be positive and finite",
            });
        }
        let fc = cutoff_from_tau(tau);
        if fc >= 0.5 / ts {
            return Err(VqfError::InvalidParam {
                field: "tau",
                reason: "cutoff frequency reaches Nyquist for this sampling time",
            });
        }
        let c = (PI * fc * ts).tan();
        let d = c * c + SQRT_2 * c + 1.0;
        let b0 = c * c / d;
        Ok(ButterCoeffs {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (c * c - 1.0) / d, (1.0 - SQRT_2 * c + c * c) / d],
        })
    }

    /// DC gain `(b0+b1+b2) / (1+a1+a2)`; 1 by construction up to rounding.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// State of one scalar low-pass filter channel.
///
/// Holds the two delay registers of the transposed direct form II recursion
/// together with the mean accumulator used during the initialization phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpfState {
    init_len: u32,
    count: u32,
    sum: f64,
    s: [f64; 2],
}

impl LpfState {
    /// Fresh state in the initialization phase. The phase spans `tau`
    /// seconds, i.e. `ceil(tau/ts)` samples.
    pub fn new(tau: f64, ts: f64) -> LpfState {
        let n = if tau > 0.0 && ts > 0.0 { (tau / ts - 1e-9).ceil().max(1.0) } else { 1.0 };
        LpfState { init_len: n as u32, count: 0, sum: 0.0, s: [0.0, 0.0] }
    }

    /// State already past initialization, at the steady state for constant
    /// input `x0` (output equals `x0` immediately).
    pub fn steady_state(coeffs: &ButterCoeffs, x0: f64) -> LpfState {
        let mut state = LpfState { init_len: 0, count: 0, sum: 0.0, s: [0.0, 0.0] };
        state.set_steady_state(coeffs, x0);
        state
    }

    fn set_steady_state(&mut self, coeffs: &ButterCoeffs, x0: f64) {
        self.s[0] = x0 * (1.0 - coeffs.b[0]);
        self.s[1] = x0 * (coeffs.b[2] - coeffs.a[1]);
        self.count = self.init_len;
    }

    /// True once the initialization phase is over.
    pub fn is_settled(&self) -> bool {
        self.count >= self.init_len
    }

    /// Returns to the initialization phase, discarding all filter state.
    pub fn reset(&mut self) {
        self.count = 0;
        self.sum = 0.0;
        self.s = [0.0, 0.0];
    }

    /// Processes one sample. During initialization the running mean is
    /// returned; afterwards one transposed direct form II step is performed.
    ///
    /// A non-finite input resets the state to the initialization phase (this
    /// signals an upstream sensor dropout) and yields NaN for this sample.
    pub fn step(&mut self, coeffs: &ButterCoeffs, x: f64) -> f64 {
        if !x.is_finite() {
            self.reset();
            return f64::NAN;
        }
        if self.count < self.init_len {
            self.count += 1;
            self.sum += x;
            let mean = self.sum / self.count as f64;
            if self.count >= self.init_len {
                self.set_steady_state(coeffs, mean);
            }
            return mean;
        }
        let y = coeffs.b[0] * x + self.s[0];
        self.s[0] = coeffs.b[1] * x - coeffs.a[0] * y + self.s[1];
        self.s[1] = coeffs.b[2] * x - coeffs.a[1] * y;
        y
    }
}

/// Filters a three-component signal through per-channel states.
pub(crate) fn step_vec3(states: &mut [LpfState; 3], coeffs: &ButterCoeffs, v: Vec3) -> Vec3 {
    Vec3::new(
        states[0].step(coeffs, v.x),
        states[1].step(coeffs, v.y),
        states[2].step(coeffs, v.z),
    )
}

fn run_pass(coeffs: &ButterCoeffs, tau: f64, ts: f64, x: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut state = LpfState::new(tau, ts);
    x.map(|v| state.step(coeffs, v)).collect()
}

/// Zero-phase low-pass filtering of a whole series with the second-order
/// filter for time constant `tau`.
///
/// Runs a causal pass and an anticausal pass in both orders and averages the
/// two results. This keeps the zero-phase property of forward/backward
/// filtering while making the output exactly symmetric under time reversal,
/// so the offline estimator treats the beginning and end of a recording
/// identically.
pub fn filtfilt(x: &[f64], tau: f64, ts: f64) -> Result<Vec<f64>, VqfError> {
    let coeffs = ButterCoeffs::design(tau, ts)?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let forward = run_pass(&coeffs, tau, ts, x.iter().copied());
    let mut fb = run_pass(&coeffs, tau, ts, forward.into_iter().rev());
    fb.reverse();

    let mut backward = run_pass(&coeffs, tau, ts, x.iter().rev().copied());
    backward.reverse();
    let bf = run_pass(&coeffs, tau, ts, backward.into_iter());

    Ok(fb.iter().zip(bf.iter()).map(|(a, b)| 0.5 * (a + b)).collect())
}
