//! Command-line front end: run simulations, convert irradiance inputs into
//! harvest power traces, compute budget CCDFs, and summarize trace
//! directories. Exit codes: 0 success, 1 usage, 2 validation, 3 I/O.

use crate::io::CsvError;
use crate::report::{self, ReportError};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::{self, SimError};
use crate::solar::{self, HarvestError, PanelConfig};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// Seed fallback when neither `--seed` nor the scenario file provide one.
pub const SEED_ENV_VAR: &str = "SIGNPOST_SIM_SEED";

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(inner) => inner.into(),
            SimError::Csv(inner) => inner.into(),
            SimError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Io { .. } => CliError::Io(e.to_string()),
            CsvError::Format { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } | ReportError::EmptyTraceDir(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<HarvestError> for CliError {
    fn from(e: HarvestError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "signpost-sim",
    version,
    about = "Simulator for a solar-harvesting, multi-tenant sensing platform"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct PanelArgs {
    /// Panel area, m².
    #[arg(long, default_value_t = 0.096)]
    area: f64,
    /// Panel conversion efficiency.
    #[arg(long, default_value_t = 0.17)]
    efficiency: f64,
    /// Tilt from horizontal, degrees (90 = vertical).
    #[arg(long, default_value_t = 90.0)]
    tilt: f64,
    /// Facing, degrees clockwise from north.
    #[arg(long, default_value_t = 180.0)]
    azimuth: f64,
    #[arg(long, default_value_t = 37.87, allow_negative_numbers = true)]
    lat: f64,
    #[arg(long, default_value_t = -122.26, allow_negative_numbers = true)]
    lon: f64,
    /// Include ground-reflected irradiance.
    #[arg(long)]
    ground_reflection: bool,
    #[arg(long, default_value_t = 0.2)]
    albedo: f64,
}

impl PanelArgs {
    fn to_config(&self) -> Result<PanelConfig, CliError> {
        let config = PanelConfig {
            area_m2: self.area,
            efficiency: self.efficiency,
            tilt_deg: self.tilt,
            azimuth_deg: self.azimuth,
            latitude_deg: self.lat,
            longitude_deg: self.lon,
            ground_reflection: self.ground_reflection,
            albedo: self.albedo,
        };
        config.validate().map_err(CliError::Validation)?;
        Ok(config)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write trace files plus a summary.
    Simulate {
        scenario: PathBuf,
        /// Output directory for traces and summary.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Master seed (beats the scenario file and SIGNPOST_SIM_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Override scenario fields, e.g.
        /// --set platforms.0.comm.policy.queue_threshold=10
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Convert an irradiance CSV (or a voc/isc field log) into a harvest
    /// power trace.
    Harvest {
        input: PathBuf,
        #[arg(long, default_value = "power.csv")]
        out: PathBuf,
        /// Treat the input as a field log (`timestamp_utc,voc_v,isc_a`).
        #[arg(long)]
        field_log: bool,
        /// Fill factor applied in field-log mode.
        #[arg(long, default_value_t = solar::DEFAULT_FILL_FACTOR)]
        fill_factor: f64,
        #[command(flatten)]
        panel: PanelArgs,
    },
    /// Weekly per-application budget CCDF from a power trace or an
    /// irradiance CSV.
    Ccdf {
        input: PathBuf,
        #[arg(long, default_value = "ccdf.csv")]
        out: PathBuf,
        /// Static platform draw subtracted from the weekly harvest, mW.
        #[arg(long, default_value_t = 16.0)]
        static_mw: f64,
        /// Tenant applications sharing the budget.
        #[arg(long, default_value_t = 5)]
        n_apps: u32,
        /// Combined charging and regulation efficiency.
        #[arg(long, default_value_t = 0.76)]
        chain_eff: f64,
        #[command(flatten)]
        panel: PanelArgs,
    },
    /// Summarize a trace directory and cross-check it against the audit.
    Report { trace_dir: PathBuf },
    /// Emit stored records from a trace directory as CSV.
    DumpStorage {
        trace_dir: PathBuf,
        /// Only records belonging to this application.
        #[arg(long)]
        app: Option<String>,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => std::process::ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { scenario, out, seed, sets } => simulate(&scenario, &out, seed, &sets),
        Command::Harvest { input, out, field_log, fill_factor, panel } => {
            harvest(&input, &out, field_log, fill_factor, &panel)
        }
        Command::Ccdf { input, out, static_mw, n_apps, chain_eff, panel } => {
            ccdf(&input, &out, static_mw, n_apps, chain_eff, &panel)
        }
        Command::Report { trace_dir } => run_report(&trace_dir),
        Command::DumpStorage { trace_dir, app } => dump_storage(&trace_dir, app.as_deref()),
    }
}

/// Apply `key=value` overrides onto the raw scenario JSON. Paths use dots
/// with numeric array indices (`platforms.0.seed` style). Intermediate
/// objects are created when absent (the field may only exist as a default);
/// the final deserialization still rejects unknown fields.
fn apply_overrides(value: &mut serde_json::Value, sets: &[String]) -> Result<(), CliError> {
    for set in sets {
        let (path, raw) = set
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set expects KEY=VALUE, got `{set}`")))?;
        let mut cursor = &mut *value;
        let segments: Vec<&str> = path.split('.').collect();
        for (i, segment) in segments.iter().enumerate() {
            let last = i + 1 == segments.len();
            cursor = match cursor {
                serde_json::Value::Array(items) => {
                    let idx: usize = segment.parse().map_err(|_| {
                        CliError::Validation(format!("`{path}`: `{segment}` is not an index"))
                    })?;
                    items.get_mut(idx).ok_or_else(|| {
                        CliError::Validation(format!("`{path}`: index {idx} out of range"))
                    })?
                }
                serde_json::Value::Object(map) => map
                    .entry(segment.to_string())
                    .or_insert_with(|| serde_json::json!({})),
                _ => {
                    return Err(CliError::Validation(format!(
                        "`{path}`: `{segment}` does not address an object or array"
                    )))
                }
            };
            if last {
                *cursor = parse_override_value(raw);
            }
        }
    }
    Ok(())
}

fn parse_override_value(raw: &str) -> serde_json::Value {
    if let Ok(v) = serde_json::from_str(raw) {
        v
    } else {
        serde_json::Value::String(raw.to_string())
    }
}

fn simulate(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    sets: &[String],
) -> Result<(), CliError> {
    let raw = fs::read_to_string(scenario_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", scenario_path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::Validation(format!("parse error: {e}")))?;
    apply_overrides(&mut value, sets)?;

    // Seed precedence: flag, then scenario file, then environment, then 0.
    if let Some(seed) = seed {
        value["seed"] = serde_json::json!(seed);
    } else if value.get("seed").is_none() {
        if let Some(env_seed) =
            std::env::var(SEED_ENV_VAR).ok().and_then(|s| s.parse::<u64>().ok())
        {
            value["seed"] = serde_json::json!(env_seed);
        }
    }

    let scenario = Scenario::from_json(&value.to_string())?;
    let base_dir = scenario_path.parent().unwrap_or_else(|| Path::new("."));
    let summary = sim::run_with_base(&scenario, base_dir, out)?;
    println!(
        "simulated {:.0} s, seed {}, traces in {}",
        summary.duration_s,
        summary.seed,
        out.display()
    );
    for platform in &summary.platforms {
        for app in &platform.apps {
            println!(
                "  {}/{}: avg {:.3} mW, final balance {:.1} mWh, {} gating event(s)",
                platform.name,
                app.app_id,
                app.avg_power_mw,
                app.final_balance_mwh,
                app.gating.len()
            );
        }
        println!(
            "  {}: audit rel err {:.2e}, {} cellular flush(es)",
            platform.name, platform.audit.relative_error, platform.comm.flush_count
        );
    }
    Ok(())
}

fn harvest(
    input: &Path,
    out: &Path,
    field_log: bool,
    fill_factor: f64,
    panel: &PanelArgs,
) -> Result<(), CliError> {
    let trace: Vec<(i64, f64)> = if field_log {
        if !(fill_factor > 0.0 && fill_factor <= 1.0) {
            return Err(CliError::Validation(format!(
                "fill factor must be in (0, 1], got {fill_factor}"
            )));
        }
        crate::io::read_field_log_csv(input)?
            .into_iter()
            .map(|r| {
                (r.timestamp, solar::estimate_field_power(r.voc_v, r.isc_a, fill_factor) * 1000.0)
            })
            .collect()
    } else {
        let config = panel.to_config()?;
        let records = crate::io::read_irradiance_csv(input)?;
        solar::harvest_trace(&records, &config)
    };
    crate::io::write_power_trace_csv(out, &trace)?;
    let mean = trace.iter().map(|&(_, p)| p).sum::<f64>() / trace.len() as f64;
    println!("{} samples -> {}, mean {:.1} mW", trace.len(), out.display(), mean);
    Ok(())
}

fn ccdf(
    input: &Path,
    out: &Path,
    static_mw: f64,
    n_apps: u32,
    chain_eff: f64,
    panel: &PanelArgs,
) -> Result<(), CliError> {
    if n_apps == 0 {
        return Err(CliError::Validation("n_apps must be >= 1".into()));
    }
    if !(chain_eff > 0.0 && chain_eff <= 1.0) {
        return Err(CliError::Validation(format!(
            "chain efficiency must be in (0, 1], got {chain_eff}"
        )));
    }
    let header = first_line(input)?;
    let trace = if header.starts_with("timestamp_utc,power_mw") {
        crate::io::read_power_trace_csv(input)?
    } else if header.starts_with("timestamp_utc,dni_wm2") {
        let config = panel.to_config()?;
        let records = crate::io::read_irradiance_csv(input)?;
        solar::harvest_trace(&records, &config)
    } else {
        return Err(CliError::Validation(format!(
            "{}: expected a power trace or irradiance CSV, got header `{header}`",
            input.display()
        )));
    };
    let dist = solar::weekly_ccdf(&trace, static_mw, n_apps, chain_eff)?;
    crate::io::write_ccdf_csv(out, &dist)?;
    println!(
        "{} week(s) -> {} ({} distinct budget level(s))",
        dist.n_weeks(),
        out.display(),
        dist.points().len()
    );
    for &(budget, fraction) in dist.points() {
        println!("  >= {budget:8.3} mW in {:5.1}% of weeks", fraction * 100.0);
    }
    Ok(())
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let content = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    content
        .lines()
        .next()
        .map(|l| l.trim().to_string())
        .ok_or_else(|| CliError::Validation(format!("{}: empty file", path.display())))
}

fn run_report(trace_dir: &Path) -> Result<(), CliError> {
    let trace_report = report::load_trace_dir(trace_dir)?;
    print!("{}", report::render(&trace_report));
    report::check_against_audit(&trace_report)?;
    println!("audit cross-check: OK");
    Ok(())
}

fn dump_storage(trace_dir: &Path, app: Option<&str>) -> Result<(), CliError> {
    let mut paths = Vec::new();
    if trace_dir.join("storage.csv").exists() {
        paths.push(trace_dir.join("storage.csv"));
    } else if trace_dir.is_dir() {
        let mut subdirs: Vec<PathBuf> = fs::read_dir(trace_dir)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", trace_dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path().join("storage.csv")))
            .filter(|p| p.exists())
            .collect();
        subdirs.sort();
        paths.extend(subdirs);
    }
    if paths.is_empty() {
        return Err(CliError::Io(format!(
            "no storage.csv found under {}",
            trace_dir.display()
        )));
    }
    println!("app_id,record_id,timestamp,hex_payload");
    for path in paths {
        for row in report::read_storage_dump(&path)? {
            if app.is_some_and(|a| a != row.app_id) {
                continue;
            }
            let hex: String = row.payload.iter().map(|b| format!("{b:02x}")).collect();
            println!("{},{},{:.3},{hex}", row.app_id, row.record_id, row.timestamp_s);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_follow_paths() {
        let mut value: serde_json::Value = serde_json::json!({
            "duration_s": 10,
            "platforms": [ { "comm": { "policy": { "queue_threshold": 20 } } } ]
        });
        apply_overrides(
            &mut value,
            &["platforms.0.comm.policy.queue_threshold=5".to_string(), "seed=9".to_string()],
        )
        .unwrap();
        assert_eq!(value["platforms"][0]["comm"]["policy"]["queue_threshold"], 5);
        assert_eq!(value["seed"], 9);
    }

    #[test]
    fn override_rejects_bad_paths() {
        let mut value = serde_json::json!({ "platforms": [] });
        assert!(apply_overrides(&mut value, &["platforms.7.x=1".to_string()]).is_err());
        assert!(apply_overrides(&mut value, &["no-equals".to_string()]).is_err());
        assert!(apply_overrides(&mut value, &["platforms.zero=1".to_string()]).is_err());
    }

    #[test]
    fn override_values_parse_as_json_when_possible() {
        assert_eq!(parse_override_value("5"), serde_json::json!(5));
        assert_eq!(parse_override_value("5.5"), serde_json::json!(5.5));
        assert_eq!(parse_override_value("true"), serde_json::json!(true));
        assert_eq!(parse_override_value("hello"), serde_json::json!("hello"));
    }
}
