//! The `run` subcommand: feed IMU CSV recordings through the estimator.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use rayon::prelude::*;
use vqf::{offline_vqf, BasicVqf, EstimateRecord, Vec3, Vqf, VqfError, VqfParams};

use crate::io;
use crate::{usage, Mode, RunArgs};

pub fn cmd_run(args: RunArgs) -> Result<()> {
    if args.output.is_some() && args.inputs.len() != 1 {
        return Err(usage("--output works with a single input; use --output-dir for several"));
    }
    if let Some(rate) = args.rate {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(usage(format!("--rate must be positive and finite, got {rate}")));
        }
    }

    let mut params = VqfParams::default();
    if let Some(path) = &args.params {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        params = VqfParams::from_kv_text(&text)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    args.overrides.apply(&mut params);
    params.validate().map_err(|e| usage(format!("invalid parameters: {e}")))?;

    let jobs: Vec<(PathBuf, PathBuf)> = args
        .inputs
        .iter()
        .map(|input| (input.clone(), output_path(input, &args)))
        .collect();

    // One estimator per file; the files are independent.
    let results: Vec<Result<String>> = jobs
        .par_iter()
        .map(|(input, output)| {
            let (rows, warnings) =
                process_file(input, output, args.mode, args.rate, &params, args.ignore_mag)?;
            if warnings > 0 {
                eprintln!(
                    "warning: {}: {warnings} non-finite row(s) repeated the previous estimate",
                    input.display()
                );
            }
            Ok(format!("{}: {rows} rows -> {}", input.display(), output.display()))
        })
        .collect();

    let mut first_err = None;
    for result in results {
        match result {
            Ok(line) => println!("{line}"),
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn output_path(input: &Path, args: &RunArgs) -> PathBuf {
    if let Some(out) = &args.output {
        return out.clone();
    }
    let stem = input.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy());
    let name = format!("{stem}_est.csv");
    match &args.output_dir {
        Some(dir) => dir.join(name),
        None => input.with_file_name(name),
    }
}

fn process_file(
    input: &Path,
    output: &Path,
    mode: Mode,
    rate: Option<f64>,
    params: &VqfParams,
    ignore_mag: bool,
) -> Result<(usize, usize)> {
    let data = io::read_imu_csv(input)?;
    let ts = resolve_ts(rate, data.t.as_deref(), input)?;
    let mag = if ignore_mag { None } else { data.mag.as_deref() };
    let (records, warnings) = match mode {
        Mode::Basic => run_basic(ts, params, &data.gyr, &data.acc, mag)?,
        Mode::Full => run_full(ts, params, &data.gyr, &data.acc, mag)?,
        Mode::Offline => run_offline(ts, params, &data.gyr, &data.acc, mag)?,
    };
    io::write_estimates(output, &records)?;
    Ok((records.len(), warnings))
}

/// Sampling interval: an explicit `--rate` wins; otherwise the median step
/// of the time column, which must be regular to 1%.
fn resolve_ts(rate: Option<f64>, t: Option<&[f64]>, path: &Path) -> Result<f64> {
    if let Some(rate) = rate {
        return Ok(1.0 / rate);
    }
    let t = t.ok_or_else(|| {
        usage(format!("{}: no `t` column; pass --rate to set the sampling rate", path.display()))
    })?;
    if t.len() < 2 {
        return Err(usage(format!(
            "{}: need at least two samples to derive the rate from `t`",
            path.display()
        )));
    }
    let mut diffs: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(f64::total_cmp);
    let median = diffs[diffs.len() / 2];
    if !(median > 0.0) || !median.is_finite() {
        return Err(usage(format!("{}: time column is not strictly increasing", path.display())));
    }
    for (k, w) in t.windows(2).enumerate() {
        let step = w[1] - w[0];
        if ((step - median) / median).abs() > 0.01 {
            return Err(usage(format!(
                "{}: time column is irregular: step {:.6} s before line {} deviates more than \
                 1% from the median {:.6} s; resample or pass --rate",
                path.display(),
                step,
                k + 3,
                median
            )));
        }
    }
    Ok(median)
}

fn run_basic(
    ts: f64,
    params: &VqfParams,
    gyr: &[Vec3],
    acc: &[Vec3],
    mag: Option<&[Vec3]>,
) -> Result<(Vec<EstimateRecord>, usize)> {
    let mut core = BasicVqf::new(ts, params.tau_acc, params.tau_mag)
        .map_err(|e| usage(format!("invalid parameters: {e}")))?;
    let mut out = Vec::with_capacity(gyr.len());
    let mut warnings = 0usize;
    let mut prev: Option<EstimateRecord> = None;
    for k in 0..gyr.len() {
        let record = match core.update(gyr[k], acc[k], mag.map(|m| m[k])) {
            Ok((quat_6d, quat_9d)) => EstimateRecord {
                quat_6d,
                quat_9d,
                delta: core.delta(),
                bias: Vec3::ZERO,
                bias_sigma: 0.0,
                rest: false,
                mag_disturbed: false,
            },
            Err(VqfError::NonFiniteSample) => {
                warnings += 1;
                prev.unwrap_or(EstimateRecord {
                    quat_6d: core.quat_6d(),
                    quat_9d: core.quat_9d(),
                    delta: core.delta(),
                    bias: Vec3::ZERO,
                    bias_sigma: 0.0,
                    rest: false,
                    mag_disturbed: false,
                })
            }
            Err(e) => return Err(e.into()),
        };
        prev = Some(record);
        out.push(record);
    }
    Ok((out, warnings))
}

fn run_full(
    ts: f64,
    params: &VqfParams,
    gyr: &[Vec3],
    acc: &[Vec3],
    mag: Option<&[Vec3]>,
) -> Result<(Vec<EstimateRecord>, usize)> {
    let mut filter = Vqf::new(ts, params.clone())
        .map_err(|e| usage(format!("invalid parameters: {e}")))?;
    let mut out = Vec::with_capacity(gyr.len());
    let mut warnings = 0usize;
    let mut prev: Option<EstimateRecord> = None;
    for k in 0..gyr.len() {
        let record = match filter.update(gyr[k], acc[k], mag.map(|m| m[k])) {
            Ok(record) => record,
            Err(VqfError::NonFiniteSample) => {
                warnings += 1;
                prev.unwrap_or_else(|| {
                    let (bias, bias_sigma) = filter.bias_estimate();
                    EstimateRecord {
                        quat_6d: filter.quat_6d(),
                        quat_9d: filter.quat_9d(),
                        delta: filter.delta(),
                        bias,
                        bias_sigma,
                        rest: false,
                        mag_disturbed: false,
                    }
                })
            }
            Err(e) => return Err(e.into()),
        };
        prev = Some(record);
        out.push(record);
    }
    Ok((out, warnings))
}

fn run_offline(
    ts: f64,
    params: &VqfParams,
    gyr: &[Vec3],
    acc: &[Vec3],
    mag: Option<&[Vec3]>,
) -> Result<(Vec<EstimateRecord>, usize)> {
    // The smoother needs finite input throughout; non-finite rows repeat
    // the nearest earlier valid sample (the first valid one for a
    // non-finite head) and are counted as warnings.
    let n = gyr.len();
    let finite = |k: usize| {
        gyr[k].is_finite() && acc[k].is_finite() && mag.map_or(true, |m| m[k].is_finite())
    };
    let valid: Vec<bool> = (0..n).map(finite).collect();
    let first_valid = valid
        .iter()
        .position(|&v| v)
        .ok_or_else(|| usage("every row contains non-finite values"))?;

    let mut g = gyr.to_vec();
    let mut a = acc.to_vec();
    let mut m = mag.map(<[Vec3]>::to_vec);
    let mut warnings = 0usize;
    let mut last = first_valid;
    for k in 0..n {
        if valid[k] {
            last = k;
        } else {
            warnings += 1;
            g[k] = g[last];
            a[k] = a[last];
            if let Some(m) = &mut m {
                m[k] = m[last];
            }
        }
    }

    let res = offline_vqf(ts, params, &g, &a, m.as_deref())?;
    let records = (0..n)
        .map(|k| EstimateRecord {
            quat_6d: res.quat_6d[k],
            quat_9d: res.quat_9d[k],
            delta: res.delta[k],
            bias: res.bias[k],
            bias_sigma: res.bias_sigma[k],
            rest: res.rest[k],
            mag_disturbed: res.mag_disturbed[k],
        })
        .collect();
    Ok((records, warnings))
}
