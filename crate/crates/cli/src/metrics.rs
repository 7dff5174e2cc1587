//! `metrics.csv` and `summary.txt` writers.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use pctrain_core::{EpochRecord, Role, RunReport, ValidationRecord};

pub const METRICS_HEADER: &str = "epoch,role,train_loss,train_acc,val_loss,val_acc,wall_ms";

/// One CSV row. Validation-only rows (the model that sat out the epoch) leave
/// the training columns empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub role: Role,
    pub train_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_ms: Option<f64>,
}

impl From<&EpochRecord> for MetricsRow {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            role: r.role,
            train_loss: Some(r.train_loss),
            train_acc: Some(r.train_accuracy),
            val_loss: r.val_loss,
            val_acc: r.val_accuracy,
            wall_ms: Some(r.wall_ms),
        }
    }
}

impl From<&ValidationRecord> for MetricsRow {
    fn from(r: &ValidationRecord) -> Self {
        Self {
            epoch: r.epoch,
            role: r.role,
            train_loss: None,
            train_acc: None,
            val_loss: r.val_loss,
            val_acc: r.val_accuracy,
            wall_ms: None,
        }
    }
}

/// Rows of a report in epoch order; each epoch's training row precedes its
/// validation-only row.
pub fn report_rows(report: &RunReport) -> Vec<MetricsRow> {
    let mut rows = Vec::with_capacity(report.records.len() + report.counterpart.len());
    let mut shadow = report.counterpart.iter().peekable();
    for r in &report.records {
        rows.push(MetricsRow::from(r));
        while let Some(v) = shadow.next_if(|v| v.epoch == r.epoch) {
            rows.push(MetricsRow::from(v));
        }
    }
    rows.extend(shadow.map(MetricsRow::from));
    rows
}

/// Formats with six significant digits, keeping trailing zeros (`1.0` → `1.00000`).
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').map_or(0, |i| i + 1)..]
        .parse()
        .unwrap_or(0);
    if (-5..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        sci
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

pub fn render_metrics(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.role.as_str(),
            cell(r.train_loss),
            cell(r.train_acc),
            sig6(r.val_loss),
            sig6(r.val_acc),
            cell(r.wall_ms)
        );
    }
    out
}

/// Writes the CSV. An empty row list is an error and creates no file.
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> io::Result<()> {
    if rows.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "no epoch records to write",
        ));
    }
    fs::write(path, render_metrics(rows))
}

pub fn write_summary(pairs: &[(&str, String)], path: &Path) -> io::Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(path, text)
}
