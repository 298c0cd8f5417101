//! The `eval` subcommand: compare an estimate CSV against ground truth and
//! print an error report as flat key-value text.

use std::fs;

use anyhow::{Context, Result};
use vqf::metrics::ErrorReport;
use vqf::{Quaternion, Vec3};

use crate::io::{read_table, Table};
use crate::{usage, EvalArgs};

/// Unit-quaternion series from the named columns, normalized to absorb the
/// rounding of the CSV representation.
fn quat_columns(table: &Table, names: [&str; 4]) -> Option<Vec<Quaternion>> {
    let w = table.column(names[0])?;
    let x = table.column(names[1])?;
    let y = table.column(names[2])?;
    let z = table.column(names[3])?;
    Some((0..w.len()).map(|k| Quaternion::new(w[k], x[k], y[k], z[k]).normalized()).collect())
}

fn bias_columns(table: &Table) -> Option<Vec<Vec3>> {
    let x = table.column("bias_x")?;
    let y = table.column("bias_y")?;
    let z = table.column("bias_z")?;
    Some((0..x.len()).map(|k| Vec3::new(x[k], y[k], z[k])).collect())
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let est = read_table(&args.estimate)?;
    let truth = read_table(&args.truth)?;
    if est.rows != truth.rows {
        return Err(usage(format!(
            "row count mismatch: {} has {} rows, {} has {}",
            args.estimate.display(),
            est.rows,
            args.truth.display(),
            truth.rows
        )));
    }
    if est.rows == 0 {
        return Err(usage("the files contain no data rows"));
    }

    let est_q = quat_columns(&est, ["q9_w", "q9_x", "q9_y", "q9_z"])
        .or_else(|| quat_columns(&est, ["q_w", "q_x", "q_y", "q_z"]))
        .ok_or_else(|| {
            usage(format!(
                "{}: need quaternion columns `q9_w..q9_z` or `q_w..q_z`",
                args.estimate.display()
            ))
        })?;
    let truth_q = quat_columns(&truth, ["q_w", "q_x", "q_y", "q_z"])
        .or_else(|| quat_columns(&truth, ["q9_w", "q9_x", "q9_y", "q9_z"]))
        .ok_or_else(|| {
            usage(format!(
                "{}: need quaternion columns `q_w..q_z`",
                args.truth.display()
            ))
        })?;

    let rest: Option<Vec<bool>> =
        truth.column("rest").map(|c| c.iter().map(|&v| v != 0.0).collect());
    if rest.is_none() {
        eprintln!(
            "warning: {}: no `rest` column; treating every sample as motion",
            args.truth.display()
        );
    }

    // Bias residual when both files carry bias columns; the true bias is
    // taken from the first truth row (it is constant in generated data).
    let est_bias = bias_columns(&est);
    let truth_bias = bias_columns(&truth).map(|b| b[0]);
    let bias = est_bias.as_ref().zip(truth_bias).map(|(series, truth)| (series.as_slice(), truth));

    let report = ErrorReport::compute(&est_q, &truth_q, rest.as_deref(), bias)?;
    let text = report.to_kv_text();
    print!("{text}");
    if let Some(out) = &args.output {
        fs::write(out, &text).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(())
}
