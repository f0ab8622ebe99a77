//! Metric emission: per-slot CSV files and the summary JSON document.

use crate::qoe::SlotRecord;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Fixed CSV schema; consumers parse the header and fail on drift.
pub const CSV_HEADER: &str =
    "t,algorithm,seed,i_or_k,kind,rate_bpshz,latency_s,power_mw,assoc_uav,qX,qZ,qY,phi_obj";

/// Output file set of one invocation.
#[derive(Debug, Clone)]
pub struct OutputBundle {
    pub slot_csvs: Vec<PathBuf>,
    pub summary_json: PathBuf,
    pub conic_dump_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct WriteError {
    pub path: String,
    pub source: std::io::Error,
}

/// Fixed-decimal formatting with 9 significant digits; deterministic across
/// runs and platforms.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).clamp(0, 40) as usize;
    format!("{x:.decimals$}")
}

/// Writes one run's slot records: one row per (slot, entity), subscriber
/// rows before UAV rows, both in id order.
pub fn write_slot_csv(
    records: &[SlotRecord],
    algorithm: &str,
    seed: u64,
    path: &Path,
) -> Result<(), WriteError> {
    let wrap = |source: std::io::Error| WriteError {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(wrap)?;
    let mut out = std::io::BufWriter::new(file);
    let mut emit = |line: &str| writeln!(out, "{line}").map_err(wrap);
    emit(CSV_HEADER)?;
    for rec in records {
        let phi = format_sig(rec.phi_objective);
        for i in 0..rec.rates.len() {
            let assoc = rec
                .assoc
                .uav_of(i)
                .map_or(-1i64, |k| k as i64);
            emit(&format!(
                "{},{},{},{},sub,{},{},0.0,{},{},{},0.0,{}",
                rec.t,
                algorithm,
                seed,
                i,
                format_sig(rec.rates[i]),
                format_sig(rec.latencies[i]),
                assoc,
                format_sig(rec.queues.x[i]),
                format_sig(rec.queues.z[i]),
                phi,
            ))?;
        }
        for k in 0..rec.powers_mw.len() {
            let assoc = rec
                .assoc
                .subscriber_of(k)
                .map_or(-1i64, |i| i as i64);
            emit(&format!(
                "{},{},{},{},uav,0.0,0.0,{},{},0.0,0.0,{},{}",
                rec.t,
                algorithm,
                seed,
                k,
                format_sig(rec.powers_mw[k]),
                assoc,
                format_sig(rec.queues.y[k]),
                phi,
            ))?;
        }
    }
    out.flush().map_err(wrap)
}

/// Writes the summary document (pretty JSON, trailing newline).
pub fn write_summary_json(summary: &serde_json::Value, path: &Path) -> Result<(), WriteError> {
    let wrap = |source: std::io::Error| WriteError {
        path: path.display().to_string(),
        source,
    };
    let text = serde_json::to_string_pretty(summary).expect("json serialization");
    std::fs::write(path, text + "\n").map_err(wrap)
}
