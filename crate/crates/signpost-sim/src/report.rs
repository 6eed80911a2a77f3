//! Trace readers and the run report: per-application power recomputed from
//! the energy trace, gating events, comm statistics, and a cross-check of
//! trace totals against the run's energy audit.

use crate::sim::RunSummary;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("no trace data found under {0}")]
    EmptyTraceDir(String),
    #[error("trace totals disagree with the ledger audit: {0}")]
    AuditMismatch(String),
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> ReportError {
    ReportError::Format { path: path.display().to_string(), line, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub app_id: String,
    pub avg_power_mw: f64,
    pub balance_mwh: f64,
    pub enabled: bool,
    pub battery_mwh: f64,
    pub net_in_mw: f64,
}

pub fn read_energy_trace(path: &Path) -> Result<Vec<EnergyRow>, ReportError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 {
            let expected = "t,app_id,avg_power_mw,balance_mwh,enabled,battery_mwh,net_in_mw";
            if line.trim() != expected {
                return Err(format_err(path, 1, format!("unexpected header `{line}`")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format_err(path, idx + 1, "expected 7 fields"));
        }
        let parse = |i: usize| -> Result<f64, ReportError> {
            fields[i]
                .parse()
                .map_err(|_| format_err(path, idx + 1, format!("bad number `{}`", fields[i])))
        };
        rows.push(EnergyRow {
            t: parse(0)?,
            app_id: fields[1].to_string(),
            avg_power_mw: parse(2)?,
            balance_mwh: parse(3)?,
            enabled: fields[4] == "true",
            battery_mwh: parse(5)?,
            net_in_mw: parse(6)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommRow {
    pub t: f64,
    pub event: String,
    pub app_id: String,
    pub queue_len: usize,
    pub energy_mwh: f64,
}

pub fn read_comm_trace(path: &Path) -> Result<Vec<CommRow>, ReportError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "t,event,app_id,queue_len,energy_mwh" {
                return Err(format_err(path, 1, format!("unexpected header `{line}`")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format_err(path, idx + 1, "expected 5 fields"));
        }
        rows.push(CommRow {
            t: fields[0]
                .parse()
                .map_err(|_| format_err(path, idx + 1, "bad time"))?,
            event: fields[1].to_string(),
            app_id: fields[2].to_string(),
            queue_len: fields[3]
                .parse()
                .map_err(|_| format_err(path, idx + 1, "bad queue_len"))?,
            energy_mwh: fields[4]
                .parse()
                .map_err(|_| format_err(path, idx + 1, "bad energy"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageRow {
    pub app_id: String,
    pub record_id: u64,
    pub timestamp_s: f64,
    pub payload: Vec<u8>,
}

pub fn read_storage_dump(path: &Path) -> Result<Vec<StorageRow>, ReportError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "app_id,record_id,timestamp,hex_payload" {
                return Err(format_err(path, 1, format!("unexpected header `{line}`")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(format_err(path, idx + 1, "expected 4 fields"));
        }
        let hex = fields[3];
        if hex.len() % 2 != 0 {
            return Err(format_err(path, idx + 1, "odd hex payload length"));
        }
        let payload = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|_| format_err(path, idx + 1, "bad hex payload"))?;
        rows.push(StorageRow {
            app_id: fields[0].to_string(),
            record_id: fields[1]
                .parse()
                .map_err(|_| format_err(path, idx + 1, "bad record_id"))?,
            timestamp_s: fields[2]
                .parse()
                .map_err(|_| format_err(path, idx + 1, "bad timestamp"))?,
            payload,
        });
    }
    Ok(rows)
}

/// Per-application aggregates recomputed from the energy trace.
#[derive(Debug, Clone, Default)]
pub struct AppAggregate {
    pub attributed_mwh: f64,
    pub avg_power_mw: f64,
    pub final_balance_mwh: f64,
    pub enabled_at_end: bool,
    pub disables: u64,
    pub enables: u64,
    /// Window-end times where the enabled flag flipped.
    pub gating_times: Vec<(f64, bool)>,
}

#[derive(Debug, Clone, Default)]
pub struct CommAggregate {
    pub enqueued: u64,
    pub lora_tx: u64,
    pub lora_fail: u64,
    pub cell_flushes: u64,
    pub cell_messages: u64,
    pub ble_adv: u64,
    pub max_queue_len: usize,
    pub energy_by_app_mwh: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct PlatformReport {
    pub name: String,
    pub apps: BTreeMap<String, AppAggregate>,
    pub comm: CommAggregate,
    pub storage_records: u64,
    pub summary: Option<crate::sim::PlatformSummary>,
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    pub platforms: Vec<PlatformReport>,
    pub summary: Option<RunSummary>,
}

fn aggregate_platform(name: &str, dir: &Path) -> Result<PlatformReport, ReportError> {
    let energy = read_energy_trace(&dir.join("energy.csv"))?;
    let comm_rows = read_comm_trace(&dir.join("comm.csv"))?;
    let storage = read_storage_dump(&dir.join("storage.csv"))?;

    let mut apps: BTreeMap<String, AppAggregate> = BTreeMap::new();
    let mut last_t: BTreeMap<String, (f64, bool)> = BTreeMap::new();
    let mut duration = 0.0f64;
    for row in &energy {
        duration = duration.max(row.t);
        if row.app_id == "platform" {
            continue;
        }
        let agg = apps.entry(row.app_id.clone()).or_default();
        let (prev_t, prev_enabled) =
            last_t.get(&row.app_id).copied().unwrap_or((0.0, true));
        let dt_h = (row.t - prev_t) / 3600.0;
        agg.attributed_mwh += row.avg_power_mw * dt_h;
        agg.final_balance_mwh = row.balance_mwh;
        agg.enabled_at_end = row.enabled;
        if row.enabled != prev_enabled {
            if row.enabled {
                agg.enables += 1;
            } else {
                agg.disables += 1;
            }
            agg.gating_times.push((row.t, row.enabled));
        }
        last_t.insert(row.app_id.clone(), (row.t, row.enabled));
    }
    if duration > 0.0 {
        for agg in apps.values_mut() {
            agg.avg_power_mw = agg.attributed_mwh / (duration / 3600.0);
        }
    }

    let mut comm = CommAggregate::default();
    for row in &comm_rows {
        comm.max_queue_len = comm.max_queue_len.max(row.queue_len);
        *comm.energy_by_app_mwh.entry(row.app_id.clone()).or_default() += row.energy_mwh;
        match row.event.as_str() {
            "enqueue" => comm.enqueued += 1,
            "lora_tx" => comm.lora_tx += 1,
            "lora_fail" => comm.lora_fail += 1,
            "cell_flush" => {
                comm.cell_messages += 1;
                if row.queue_len == 0 {
                    comm.cell_flushes += 1;
                }
            }
            "ble_adv" => comm.ble_adv += 1,
            _ => {}
        }
    }

    Ok(PlatformReport {
        name: name.to_string(),
        apps,
        comm,
        storage_records: storage.len() as u64,
        summary: None,
    })
}

/// Load a trace directory produced by a run (single platform at the root or
/// one subdirectory per platform) and recompute the report.
pub fn load_trace_dir(dir: &Path) -> Result<TraceReport, ReportError> {
    let summary: Option<RunSummary> = fs::read_to_string(dir.join("summary.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());

    let mut platforms = Vec::new();
    if dir.join("energy.csv").exists() {
        let name = summary
            .as_ref()
            .and_then(|s| s.platforms.first())
            .map(|p| p.name.clone())
            .unwrap_or_else(|| "p0".to_string());
        platforms.push(aggregate_platform(&name, dir)?);
    } else {
        let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.join("energy.csv").exists())
            .collect();
        subdirs.sort();
        for sub in subdirs {
            let name = sub.file_name().unwrap_or_default().to_string_lossy().to_string();
            platforms.push(aggregate_platform(&name, &sub)?);
        }
    }
    if platforms.is_empty() {
        return Err(ReportError::EmptyTraceDir(dir.display().to_string()));
    }
    if let Some(s) = &summary {
        for platform in &mut platforms {
            platform.summary = s.platforms.iter().find(|p| p.name == platform.name).cloned();
        }
    }
    Ok(TraceReport { platforms, summary })
}

/// Relative tolerance for the trace-vs-audit cross-check, dominated by the
/// 1e-6 mWh rounding of trace rows.
const AUDIT_CHECK_REL_TOL: f64 = 1e-3;

/// Verify that the per-app totals recomputed from the energy trace agree
/// with the audited attribution in the summary.
pub fn check_against_audit(report: &TraceReport) -> Result<(), ReportError> {
    for platform in &report.platforms {
        let Some(summary) = &platform.summary else { continue };
        for app in &summary.apps {
            let traced = platform.apps.get(&app.app_id).map_or(0.0, |a| a.attributed_mwh);
            let audited = app.attributed.total_mwh;
            let scale = audited.abs().max(1.0);
            if (traced - audited).abs() / scale > AUDIT_CHECK_REL_TOL {
                return Err(ReportError::AuditMismatch(format!(
                    "{}/{}: trace total {traced:.6} mWh vs audit {audited:.6} mWh",
                    platform.name, app.app_id
                )));
            }
        }
    }
    Ok(())
}

/// Render the report as a plain-text table.
pub fn render(report: &TraceReport) -> String {
    let mut out = String::new();
    for platform in &report.platforms {
        out.push_str(&format!("platform {}\n", platform.name));
        out.push_str("  app                avg_mw  sensing  comm     proc     time     stor     gating\n");
        for (app_id, agg) in &platform.apps {
            let (sens, comm_e, proc, timeloc, stor) = platform
                .summary
                .as_ref()
                .and_then(|s| s.apps.iter().find(|a| &a.app_id == app_id))
                .map(|a| {
                    (
                        a.attributed.sensing_mwh,
                        a.attributed.comm_mwh,
                        a.attributed.processing_mwh,
                        a.attributed.time_location_mwh,
                        a.attributed.storage_mwh,
                    )
                })
                .unwrap_or((0.0, 0.0, 0.0, 0.0, 0.0));
            let gating = agg
                .gating_times
                .iter()
                .map(|(t, enabled)| {
                    format!("{}@{t:.0}s", if *enabled { "enable" } else { "disable" })
                })
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!(
                "  {:<18} {:>7.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}  {}\n",
                app_id, agg.avg_power_mw, sens, comm_e, proc, timeloc, stor, gating
            ));
        }
        out.push_str(&format!(
            "  comm: {} enqueued, {} lora_tx, {} lora_fail, {} flushes ({} msgs), max queue {}\n",
            platform.comm.enqueued,
            platform.comm.lora_tx,
            platform.comm.lora_fail,
            platform.comm.cell_flushes,
            platform.comm.cell_messages,
            platform.comm.max_queue_len
        ));
        out.push_str(&format!("  storage records: {}\n", platform.storage_records));
        if let Some(summary) = &platform.summary {
            let a = &summary.audit;
            out.push_str(&format!(
                "  audit: in {:.3} mWh = delta {:.3} + drain {:.3} + tax {:.3} + curtailed {:.3} (rel err {:.2e})\n",
                a.total_in_mwh, a.delta_stored_mwh, a.attributed_drain_mwh, a.tax_paid_mwh,
                a.curtailed_mwh, a.relative_error
            ));
        }
    }
    out
}
