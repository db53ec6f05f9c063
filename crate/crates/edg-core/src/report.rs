//! Result records and CSV reporting.
//!
//! One record per (method, seed, horizon); aggregation adds one summary row
//! per (method, dataset, horizon) with the mean and unbiased (n−1) sample
//! standard deviation over successful seeds. Wall-clock is informational and
//! excluded from determinism comparisons.

use crate::error::{EdgError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SUMMARY_SEED: &str = "summary";

/// One evaluation outcome. `seed` is a number for per-run rows and
/// `"summary"` for aggregate rows; failed runs carry their error in `status`
/// and no accuracy claim (accuracy 0, status != "ok").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    pub dataset: String,
    pub seed: String,
    pub horizon: usize,
    pub accuracy: f64,
    /// Unbiased std over seeds; 0 for per-run rows and single-seed summaries.
    pub acc_std: f64,
    /// Episodes (dda) or optimizer steps (erm) to the selected snapshot.
    pub episodes_to_best: u64,
    pub wall_clock_s: f64,
    pub config_hash: String,
    pub status: String,
}

impl ResultRecord {
    /// True when the row carries a valid accuracy: plain "ok" for per-run
    /// rows, "ok (k/n seeds)" for summary rows.
    pub fn is_ok(&self) -> bool {
        self.status == "ok" || self.status.starts_with("ok (")
    }
}

/// Unbiased sample standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// Aggregate successful per-run rows into one summary row per
/// (method, dataset, horizon), preserving first-appearance order.
pub fn summarize(records: &[ResultRecord]) -> Vec<ResultRecord> {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    for r in records {
        if r.seed == SUMMARY_SEED {
            continue;
        }
        let key = (r.method.clone(), r.dataset.clone(), r.horizon);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = Vec::new();
    for (method, dataset, horizon) in keys {
        let group: Vec<&ResultRecord> = records
            .iter()
            .filter(|r| {
                r.seed != SUMMARY_SEED
                    && r.method == method
                    && r.dataset == dataset
                    && r.horizon == horizon
            })
            .collect();
        let ok: Vec<&&ResultRecord> = group.iter().filter(|r| r.is_ok()).collect();
        if ok.is_empty() {
            continue;
        }
        let accs: Vec<f64> = ok.iter().map(|r| r.accuracy).collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        out.push(ResultRecord {
            method,
            dataset,
            seed: SUMMARY_SEED.to_string(),
            horizon,
            accuracy: mean,
            acc_std: sample_std(&accs),
            episodes_to_best: 0,
            wall_clock_s: group.iter().map(|r| r.wall_clock_s).sum(),
            config_hash: ok[0].config_hash.clone(),
            status: format!("ok ({}/{} seeds)", ok.len(), group.len()),
        });
    }
    out
}

/// Console form of a summary row; the ± figures match the CSV to 3 decimals.
pub fn format_summary_line(r: &ResultRecord) -> String {
    format!(
        "{} {} horizon {}: accuracy {:.3} ± {:.3} [{}]",
        r.method, r.dataset, r.horizon, r.accuracy, r.acc_std, r.status
    )
}

pub fn write_records(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Equality for determinism checks: every field except wall-clock.
pub fn records_equal_ignoring_wall_clock(a: &[ResultRecord], b: &[ResultRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            let mut x = x.clone();
            let mut y = y.clone();
            x.wall_clock_s = 0.0;
            y.wall_clock_s = 0.0;
            x == y
        })
}

/// Reject records violating the schema invariants before writing.
pub fn validate_records(records: &[ResultRecord]) -> Result<()> {
    for r in records {
        if r.is_ok() && !(0.0..=1.0).contains(&r.accuracy) {
            return Err(EdgError::InvalidArg(format!(
                "record {}/{}/{}: accuracy {} outside [0,1]",
                r.method, r.seed, r.horizon, r.accuracy
            )));
        }
    }
    Ok(())
}
