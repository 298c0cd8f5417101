//! CSV reading and writing shared by the subcommands.

use std::path::Path;

use anyhow::{Context, Result};
use vqf::{EstimateRecord, Vec3};

use crate::usage;

/// Column order of the estimate CSV written by `run`.
pub const ESTIMATE_HEADER: [&str; 15] = [
    "q6_w", "q6_x", "q6_y", "q6_z", "q9_w", "q9_x", "q9_y", "q9_z", "delta", "bias_x", "bias_y",
    "bias_z", "bias_sigma", "rest", "mag_dist",
];

/// Floating-point cell format: nine significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// A parsed IMU recording. `mag` is present only when the file carries all
/// three magnetometer columns.
pub struct ImuCsv {
    pub t: Option<Vec<f64>>,
    pub gyr: Vec<Vec3>,
    pub acc: Vec<Vec3>,
    pub mag: Option<Vec<Vec3>>,
}

fn find(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

pub fn read_imu_csv(path: &Path) -> Result<ImuCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .clone();

    let col = |name: &str| {
        find(&headers, name)
            .ok_or_else(|| usage(format!("{}: missing column `{name}`", path.display())))
    };
    let g = [col("gyr_x")?, col("gyr_y")?, col("gyr_z")?];
    let a = [col("acc_x")?, col("acc_y")?, col("acc_z")?];
    let t_col = find(&headers, "t");
    let m = [find(&headers, "mag_x"), find(&headers, "mag_y"), find(&headers, "mag_z")];
    let m = match m {
        [Some(x), Some(y), Some(z)] => Some([x, y, z]),
        [None, None, None] => None,
        _ => {
            return Err(usage(format!(
                "{}: magnetometer data needs all three of `mag_x`, `mag_y`, `mag_z` (or none)",
                path.display()
            )))
        }
    };

    let mut out = ImuCsv {
        t: t_col.map(|_| Vec::new()),
        gyr: Vec::new(),
        acc: Vec::new(),
        mag: m.map(|_| Vec::new()),
    };
    for record in reader.records() {
        let record = record.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| {
                usage(format!("{}: line {line}: row has too few columns", path.display()))
            })?;
            raw.parse::<f64>().map_err(|_| {
                usage(format!(
                    "{}: line {line}: cannot parse `{raw}` as a number",
                    path.display()
                ))
            })
        };
        if let (Some(t), Some(idx)) = (&mut out.t, t_col) {
            t.push(get(idx)?);
        }
        out.gyr.push(Vec3::new(get(g[0])?, get(g[1])?, get(g[2])?));
        out.acc.push(Vec3::new(get(a[0])?, get(a[1])?, get(a[2])?));
        if let (Some(mag), Some(idx)) = (&mut out.mag, m) {
            mag.push(Vec3::new(get(idx[0])?, get(idx[1])?, get(idx[2])?));
        }
    }
    if out.gyr.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

pub fn write_estimates(path: &Path, records: &[EstimateRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    writer.write_record(ESTIMATE_HEADER)?;
    for r in records {
        writer.write_record([
            fmt(r.quat_6d.w),
            fmt(r.quat_6d.x),
            fmt(r.quat_6d.y),
            fmt(r.quat_6d.z),
            fmt(r.quat_9d.w),
            fmt(r.quat_9d.x),
            fmt(r.quat_9d.y),
            fmt(r.quat_9d.z),
            fmt(r.delta),
            fmt(r.bias.x),
            fmt(r.bias.y),
            fmt(r.bias.z),
            fmt(r.bias_sigma),
            flag(r.rest).to_string(),
            flag(r.mag_disturbed).to_string(),
        ])?;
    }
    writer.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// A numeric table read from CSV, column-major, for the eval command.
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
    pub rows: usize,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(&self.columns[idx])
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut columns = vec![Vec::new(); headers.len()];
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        for (idx, raw) in record.iter().enumerate() {
            let value = raw.parse::<f64>().map_err(|_| {
                usage(format!(
                    "{}: line {line}: cannot parse `{raw}` as a number",
                    path.display()
                ))
            })?;
            columns[idx].push(value);
        }
        rows += 1;
    }
    Ok(Table { headers, columns, rows })
}
