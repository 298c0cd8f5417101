//! The `synth` subcommand: render a trajectory specification into an IMU
//! CSV plus a ground-truth CSV.

use std::fs;

use anyhow::{Context, Result};
use vqf::synth::{generate, TrajectorySpec};

use crate::io::{flag, fmt};
use crate::{usage, SynthArgs};

pub fn cmd_synth(args: SynthArgs) -> Result<()> {
    if !(args.rate > 0.0) || !args.rate.is_finite() {
        return Err(usage(format!("--rate must be positive and finite, got {}", args.rate)));
    }
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| usage(format!("{}: {e}", args.spec.display())))?;
    let spec: TrajectorySpec = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: {e}", args.spec.display())))?;
    let (samples, truth) =
        generate(&spec, 1.0 / args.rate).map_err(|e| usage(format!("{}: {e}", args.spec.display())))?;

    let has_mag = samples.first().is_some_and(|s| s.mag.is_some());
    let mut imu = csv::Writer::from_path(&args.imu)
        .with_context(|| format!("cannot create {}", args.imu.display()))?;
    let mut header =
        vec!["t", "gyr_x", "gyr_y", "gyr_z", "acc_x", "acc_y", "acc_z"];
    if has_mag {
        header.extend(["mag_x", "mag_y", "mag_z"]);
    }
    imu.write_record(&header)?;
    for s in &samples {
        let mut row = vec![
            fmt(s.t),
            fmt(s.gyr.x),
            fmt(s.gyr.y),
            fmt(s.gyr.z),
            fmt(s.acc.x),
            fmt(s.acc.y),
            fmt(s.acc.z),
        ];
        if let Some(m) = s.mag {
            row.extend([fmt(m.x), fmt(m.y), fmt(m.z)]);
        }
        imu.write_record(&row)?;
    }
    imu.flush().with_context(|| format!("cannot write {}", args.imu.display()))?;

    let mut tw = csv::Writer::from_path(&args.truth)
        .with_context(|| format!("cannot create {}", args.truth.display()))?;
    tw.write_record([
        "t", "q_w", "q_x", "q_y", "q_z", "rest", "mag_dist", "bias_x", "bias_y", "bias_z",
    ])?;
    for (k, s) in samples.iter().enumerate() {
        let q = truth.quat[k];
        tw.write_record([
            fmt(s.t),
            fmt(q.w),
            fmt(q.x),
            fmt(q.y),
            fmt(q.z),
            flag(truth.rest[k]).to_string(),
            flag(truth.disturbed[k]).to_string(),
            fmt(truth.bias.x),
            fmt(truth.bias.y),
            fmt(truth.bias.z),
        ])?;
    }
    tw.flush().with_context(|| format!("cannot write {}", args.truth.display()))?;

    println!(
        "{} samples -> {} (imu), {} (truth)",
        samples.len(),
        args.imu.display(),
        args.truth.display()
    );
    Ok(())
}
