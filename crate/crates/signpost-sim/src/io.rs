//! CSV formats consumed and produced by the analysis pipeline.
//!
//! - Irradiance input: `timestamp_utc,dni_wm2,dhi_wm2` (ISO-8601 UTC).
//! - Field log input:  `timestamp_utc,voc_v,isc_a`.
//! - Power trace:      `timestamp_utc,power_mw`.
//! - CCDF output:      `budget_mw,fraction_weeks`.

use crate::solar::{BudgetDistribution, IrradianceRecord};
use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> CsvError {
    CsvError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> CsvError {
    CsvError::Format { path: path.display().to_string(), line, message: message.into() }
}

/// Parse an ISO-8601 timestamp (with or without an explicit offset; naive
/// timestamps are taken as UTC).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(ts: i64) -> String {
    Utc.timestamp_opt(ts, 0)
        .single()
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

struct CsvReader {
    lines: Vec<(usize, Vec<String>)>,
}

fn read_csv(path: &Path, expected_header: &[&str]) -> Result<CsvReader, CsvError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let header_fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if header_fields != expected_header {
        return Err(format_err(
            path,
            1,
            format!("expected header `{}`, got `{}`", expected_header.join(","), header.trim()),
        ));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != expected_header.len() {
            return Err(format_err(
                path,
                idx + 1,
                format!("expected {} fields, got {}", expected_header.len(), fields.len()),
            ));
        }
        rows.push((idx + 1, fields));
    }
    Ok(CsvReader { lines: rows })
}

fn parse_f64(path: &Path, line: usize, field: &str, value: &str) -> Result<f64, CsvError> {
    value
        .parse::<f64>()
        .map_err(|_| format_err(path, line, format!("invalid {field}: `{value}`")))
}

/// Read an irradiance CSV, enforcing nonnegative components and strictly
/// increasing timestamps.
pub fn read_irradiance_csv(path: &Path) -> Result<Vec<IrradianceRecord>, CsvError> {
    let reader = read_csv(path, &["timestamp_utc", "dni_wm2", "dhi_wm2"])?;
    let mut records = Vec::with_capacity(reader.lines.len());
    let mut prev_ts = i64::MIN;
    for (line, fields) in reader.lines {
        let timestamp = parse_timestamp(&fields[0])
            .ok_or_else(|| format_err(path, line, format!("invalid timestamp `{}`", fields[0])))?;
        let dni = parse_f64(path, line, "dni_wm2", &fields[1])?;
        let dhi = parse_f64(path, line, "dhi_wm2", &fields[2])?;
        if dni < 0.0 || dhi < 0.0 {
            return Err(format_err(path, line, "irradiance must be >= 0"));
        }
        if timestamp <= prev_ts {
            return Err(format_err(path, line, "timestamps must be strictly increasing"));
        }
        prev_ts = timestamp;
        records.push(IrradianceRecord { timestamp, dni_wm2: dni, dhi_wm2: dhi });
    }
    if records.is_empty() {
        return Err(format_err(path, 2, "no data rows"));
    }
    Ok(records)
}

pub fn write_irradiance_csv(path: &Path, records: &[IrradianceRecord]) -> Result<(), CsvError> {
    let mut out = String::from("timestamp_utc,dni_wm2,dhi_wm2\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.3},{:.3}\n",
            format_timestamp(r.timestamp),
            r.dni_wm2,
            r.dhi_wm2
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// One field-log sample: open-circuit voltage / short-circuit current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldLogRecord {
    pub timestamp: i64,
    pub voc_v: f64,
    pub isc_a: f64,
}

pub fn read_field_log_csv(path: &Path) -> Result<Vec<FieldLogRecord>, CsvError> {
    let reader = read_csv(path, &["timestamp_utc", "voc_v", "isc_a"])?;
    let mut records = Vec::with_capacity(reader.lines.len());
    let mut prev_ts = i64::MIN;
    for (line, fields) in reader.lines {
        let timestamp = parse_timestamp(&fields[0])
            .ok_or_else(|| format_err(path, line, format!("invalid timestamp `{}`", fields[0])))?;
        let voc = parse_f64(path, line, "voc_v", &fields[1])?;
        let isc = parse_f64(path, line, "isc_a", &fields[2])?;
        if voc < 0.0 || isc < 0.0 {
            return Err(format_err(path, line, "voc/isc must be >= 0"));
        }
        if timestamp <= prev_ts {
            return Err(format_err(path, line, "timestamps must be strictly increasing"));
        }
        prev_ts = timestamp;
        records.push(FieldLogRecord { timestamp, voc_v: voc, isc_a: isc });
    }
    if records.is_empty() {
        return Err(format_err(path, 2, "no data rows"));
    }
    Ok(records)
}

/// Read a harvest power trace (`timestamp_utc,power_mw`).
pub fn read_power_trace_csv(path: &Path) -> Result<Vec<(i64, f64)>, CsvError> {
    let reader = read_csv(path, &["timestamp_utc", "power_mw"])?;
    let mut trace = Vec::with_capacity(reader.lines.len());
    let mut prev_ts = i64::MIN;
    for (line, fields) in reader.lines {
        let timestamp = parse_timestamp(&fields[0])
            .ok_or_else(|| format_err(path, line, format!("invalid timestamp `{}`", fields[0])))?;
        let power = parse_f64(path, line, "power_mw", &fields[1])?;
        if power < 0.0 {
            return Err(format_err(path, line, "power must be >= 0"));
        }
        if timestamp <= prev_ts {
            return Err(format_err(path, line, "timestamps must be strictly increasing"));
        }
        prev_ts = timestamp;
        trace.push((timestamp, power));
    }
    if trace.is_empty() {
        return Err(format_err(path, 2, "no data rows"));
    }
    Ok(trace)
}

pub fn write_power_trace_csv(path: &Path, trace: &[(i64, f64)]) -> Result<(), CsvError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "timestamp_utc,power_mw")?;
        for &(ts, p) in trace {
            writeln!(w, "{},{:.6}", format_timestamp(ts), p)?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

pub fn write_ccdf_csv(path: &Path, dist: &BudgetDistribution) -> Result<(), CsvError> {
    let mut out = String::from("budget_mw,fraction_weeks\n");
    for &(budget, fraction) in dist.points() {
        out.push_str(&format!("{budget:.6},{fraction:.6}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_ccdf_csv(path: &Path) -> Result<Vec<(f64, f64)>, CsvError> {
    let reader = read_csv(path, &["budget_mw", "fraction_weeks"])?;
    let mut points = Vec::new();
    for (line, fields) in reader.lines {
        let budget = parse_f64(path, line, "budget_mw", &fields[0])?;
        let fraction = parse_f64(path, line, "fraction_weeks", &fields[1])?;
        points.push((budget, fraction));
    }
    Ok(points)
}
