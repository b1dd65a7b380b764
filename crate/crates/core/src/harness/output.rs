//! CSV and JSONL persistence.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stationarity::StationarityReport;

pub const METRICS_HEADER: &str = "# poweref metrics v1";
pub const SUMMARY_HEADER: &str = "# poweref summary v1";
pub const COMPARE_HEADER: &str = "# poweref compare v1";

const METRICS_COLUMNS: &str =
    "t,f,grad_norm,lambda_min,uplink_bytes_cum,downlink_bytes_cum,e_norm,seed";
const SUMMARY_COLUMNS: &str = "seed,algo,T,eta,p_fcc,p_batch,r,final_f,final_grad_norm,\
uplink_bytes,downlink_bytes,bytes_to_threshold,fosp_fraction";
const COMPARE_COLUMNS: &str = "label,algo,seeds,median_final_f,median_final_grad_norm,\
median_uplink_bytes,median_bytes_to_threshold,reached";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// Present on every `lambda_stride`-th row.
    pub lambda_min: Option<f64>,
    pub uplink_bytes_cum: usize,
    pub downlink_bytes_cum: usize,
    /// Norm of the client-averaged error `e_t`.
    pub e_norm: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub seed: u64,
    pub t: usize,
    #[serde(flatten)]
    pub report: StationarityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub algo: String,
    pub rounds: usize,
    pub eta: f64,
    pub p_fcc: usize,
    pub p_batch: usize,
    pub r: f64,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub uplink_bytes: usize,
    pub downlink_bytes: usize,
    /// Cumulative uplink bytes when `‖∇f(x_t)‖` first drops to the threshold.
    pub bytes_to_threshold: Option<usize>,
    pub fosp_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub algo: String,
    pub seeds: usize,
    pub median_final_f: f64,
    pub median_final_grad_norm: f64,
    pub median_uplink_bytes: f64,
    /// Median with unreached seeds counted as infinite; `None` if that is infinite.
    pub median_bytes_to_threshold: Option<f64>,
    pub reached: usize,
    pub per_seed_bytes_to_threshold: Vec<Option<usize>>,
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n{METRICS_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.f,
            r.grad_norm,
            opt(r.lambda_min),
            r.uplink_bytes_cum,
            r.downlink_bytes_cum,
            r.e_norm,
            r.seed
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n{SUMMARY_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.algo,
            r.rounds,
            r.eta,
            r.p_fcc,
            r.p_batch,
            r.r,
            r.final_f,
            r.final_grad_norm,
            r.uplink_bytes,
            r.downlink_bytes,
            opt(r.bytes_to_threshold),
            r.fosp_fraction
        );
    }
    out
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n{COMPARE_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.label,
            r.algo,
            r.seeds,
            r.median_final_f,
            r.median_final_grad_norm,
            r.median_uplink_bytes,
            opt(r.median_bytes_to_threshold),
            r.reached
        );
    }
    out
}

pub fn reports_jsonl(records: &[ReportRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).map_err(|e| Error::Serialize(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_{seed}.csv"))
}

pub fn reports_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("reports_{seed}.jsonl"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
