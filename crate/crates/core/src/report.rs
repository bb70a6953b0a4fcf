//! Aggregated experiment reports: the per-method metric table and pointwise
//! mean survival curves, with CSV and aligned-text emission.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::numfmt::fmt_f64;
use crate::survival::Arm;

/// Mean and standard deviation over repetitions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample statistics (denominator n-1); a single value has SD 0.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, sd: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Self { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub sample_size: MeanSd,
    pub masmd: MeanSd,
    pub inconsistency: MeanSd,
    pub gap_treated: MeanSd,
    pub gap_control: MeanSd,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub repetitions: usize,
    pub failed_repetitions: usize,
    pub config_digest: String,
}

impl ReportTable {
    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "method",
            "sample_size_mean",
            "sample_size_sd",
            "masmd_mean",
            "masmd_sd",
            "inconsistency_mean",
            "inconsistency_sd",
            "gap_treated_mean",
            "gap_treated_sd",
            "gap_control_mean",
            "gap_control_sd",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                fmt_f64(r.sample_size.mean),
                fmt_f64(r.sample_size.sd),
                fmt_f64(r.masmd.mean),
                fmt_f64(r.masmd.sd),
                fmt_f64(r.inconsistency.mean),
                fmt_f64(r.inconsistency.sd),
                fmt_f64(r.gap_treated.mean),
                fmt_f64(r.gap_treated.sd),
                fmt_f64(r.gap_control.mean),
                fmt_f64(r.gap_control.sd),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table with `mean (sd)` cells, four decimals.
    pub fn to_text(&self) -> String {
        let headers =
            ["Method", "Matched size", "MASMD", "Inconsistency", "Gap (treated)", "Gap (control)"];
        let cell = |m: MeanSd, digits: usize| format!("{:.*} ({:.*})", digits, m.mean, digits, m.sd);
        let mut lines: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            lines.push(vec![
                r.method.clone(),
                cell(r.sample_size, 2),
                cell(r.masmd, 4),
                cell(r.inconsistency, 4),
                cell(r.gap_treated, 4),
                cell(r.gap_control, 4),
            ]);
        }
        let widths: Vec<usize> = (0..headers.len())
            .map(|c| lines.iter().map(|row| row[c].len()).max().unwrap())
            .collect();
        let mut out = String::new();
        for (i, row) in lines.iter().enumerate() {
            for (c, cellv) in row.iter().enumerate() {
                if c > 0 {
                    out.push_str("  ");
                }
                out.push_str(&format!("{:width$}", cellv, width = widths[c]));
            }
            out.push('\n');
            if i == 0 {
                let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out.push_str(&format!(
            "repetitions: {} (failed: {})\n",
            self.repetitions, self.failed_repetitions
        ));
        out
    }
}

/// Pointwise mean of one method's survival curves on a common grid.
#[derive(Debug, Clone, Serialize)]
pub struct MeanCurve {
    pub method: String,
    pub arm: Arm,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
}

pub fn write_mean_curves_csv(path: &Path, curves: &[MeanCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "group", "time", "survival"])?;
    for c in curves {
        for i in 0..c.times.len() {
            w.write_record([
                c.method.clone(),
                c.arm.to_string(),
                fmt_f64(c.times[i]),
                fmt_f64(c.survival[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
