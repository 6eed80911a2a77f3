//! Scenario files: the versioned JSON schema describing platforms, their
//! energy chain, radios, bus, clock calibration, and tenant applications.
//! All defaults come from the platform constants table, so a minimal
//! scenario only needs a duration and one module.

use crate::bus::BusConfig;
use crate::comm::{CommPolicy, RadioLink};
use crate::io;
use crate::ledger::EnergyChainConfig;
use crate::profile::{builtin_profile, ModuleProfile};
use crate::services::{ProcessingPath, StorageConfig, TimeSyncModel};
use crate::solar::PanelConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Sensing slots per platform (one further slot is taken by the radio).
pub const MAX_SENSING_SLOTS: usize = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { path: path.into(), message: message.into() }
}

/// Where a platform's harvest power comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HarvestSource {
    /// No income; battery only.
    None,
    /// Fixed harvest power, mW.
    ConstantPower { power_mw: f64 },
    /// Step schedule of `[sim_time_s, power_mw]` points; each power holds
    /// until the next point.
    PowerSchedule { points: Vec<(f64, f64)> },
    /// Hourly (or finer) DNI/DHI samples run through the panel model.
    IrradianceCsv { path: String },
}

impl Default for HarvestSource {
    fn default() -> Self {
        HarvestSource::None
    }
}

/// Radio module configuration: policy plus the three links.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommConfig {
    pub policy: CommPolicy,
    pub lorawan: RadioLink,
    pub cellular: RadioLink,
    pub ble: RadioLink,
}

impl Default for CommConfig {
    fn default() -> Self {
        CommConfig {
            policy: CommPolicy::default(),
            lorawan: RadioLink::lorawan_default(),
            cellular: RadioLink::cellular_default(),
            ble: RadioLink::ble_default(),
        }
    }
}

/// A module profile, either named built-in or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Builtin { builtin: String },
    Inline(ModuleProfile),
}

/// One tenant module slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub app_id: String,
    pub profile: ProfileSpec,
    /// Defaults to the allocation capacity (starts full).
    #[serde(default)]
    pub initial_balance_mwh: Option<f64>,
    /// Defaults to the platform's allocation capacity.
    #[serde(default)]
    pub max_capacity_mwh: Option<f64>,
}

impl ModuleSpec {
    /// Materialize the profile with the slot's app id.
    pub fn resolve_profile(&self) -> Result<ModuleProfile, String> {
        let mut profile = match &self.profile {
            ProfileSpec::Builtin { builtin } => builtin_profile(builtin)
                .ok_or_else(|| format!("unknown builtin profile `{builtin}`"))?,
            ProfileSpec::Inline(p) => p.clone(),
        };
        profile.app_id = self.app_id.clone();
        profile.validate().map_err(|e| e.to_string())?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformSpec {
    pub name: String,
    pub panel: PanelConfig,
    pub energy: EnergyChainConfig,
    pub harvest: HarvestSource,
    pub comm: CommConfig,
    pub bus: BusConfig,
    pub time_sync: TimeSyncModel,
    pub storage: StorageConfig,
    /// Processing offload paths offered by this platform.
    pub processing_paths: BTreeMap<String, ProcessingPath>,
    pub modules: Vec<ModuleSpec>,
}

impl Default for PlatformSpec {
    fn default() -> Self {
        PlatformSpec {
            name: String::new(),
            panel: PanelConfig::default(),
            energy: EnergyChainConfig::default(),
            harvest: HarvestSource::default(),
            comm: CommConfig::default(),
            bus: BusConfig::default(),
            time_sync: TimeSyncModel::default(),
            storage: StorageConfig::default(),
            processing_paths: BTreeMap::new(),
            modules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub duration_s: f64,
    /// Master seed; when absent the runner falls back to the
    /// `SIGNPOST_SIM_SEED` environment variable, then zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Simulation epoch (ISO-8601). Defaults to the first irradiance sample
    /// when harvesting from a CSV, else the Unix epoch.
    #[serde(default)]
    pub start_time_utc: Option<String>,
    pub platforms: Vec<PlatformSpec>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Scenario {
    /// Load and validate a scenario file.
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&content)
    }

    pub fn from_json(content: &str) -> Result<Scenario, ScenarioError> {
        let mut scenario: Scenario =
            serde_json::from_str(content).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.fill_names();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn fill_names(&mut self) {
        for (i, platform) in self.platforms.iter_mut().enumerate() {
            if platform.name.is_empty() {
                platform.name = format!("p{i}");
            }
        }
    }

    /// Parsed simulation epoch, unix seconds.
    pub fn epoch_unix_s(&self) -> Option<i64> {
        self.start_time_utc.as_deref().and_then(io::parse_timestamp)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(self.duration_s > 0.0) {
            return Err(invalid("duration_s", "must be > 0"));
        }
        if self.platforms.is_empty() {
            return Err(invalid("platforms", "at least one platform is required"));
        }
        if let Some(start) = &self.start_time_utc {
            if io::parse_timestamp(start).is_none() {
                return Err(invalid("start_time_utc", format!("invalid timestamp `{start}`")));
            }
        }
        for (i, platform) in self.platforms.iter().enumerate() {
            platform
                .validate()
                .map_err(|e| match e {
                    ScenarioError::Validation { path, message } => ScenarioError::Validation {
                        path: format!("platforms[{i}].{path}"),
                        message,
                    },
                    other => other,
                })?;
        }
        let mut names: Vec<&str> = self.platforms.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.platforms.len() {
            return Err(invalid("platforms", "platform names must be unique"));
        }
        Ok(())
    }
}

impl PlatformSpec {
    fn validate(&self) -> Result<(), ScenarioError> {
        self.panel.validate().map_err(|m| invalid("panel", m))?;
        self.energy.validate().map_err(|m| invalid("energy", m))?;
        self.bus.validate().map_err(|m| invalid("bus", m))?;
        self.time_sync.validate().map_err(|m| invalid("time_sync", m))?;
        self.comm.policy.validate().map_err(|m| invalid("comm.policy", m))?;
        self.comm.lorawan.validate("lorawan").map_err(|m| invalid("comm", m))?;
        self.comm.cellular.validate("cellular").map_err(|m| invalid("comm", m))?;
        self.comm.ble.validate("ble").map_err(|m| invalid("comm", m))?;

        if self.modules.len() > MAX_SENSING_SLOTS {
            return Err(invalid(
                "modules",
                format!(
                    "{} sensing profiles exceed the {MAX_SENSING_SLOTS} available slots",
                    self.modules.len()
                ),
            ));
        }
        let mut ids: Vec<&str> = self.modules.iter().map(|m| m.app_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.modules.len() {
            return Err(invalid("modules", "app_id values must be unique"));
        }

        let mut total_balance = self.energy.initial_reserve_mwh;
        for (i, module) in self.modules.iter().enumerate() {
            let field = |f: &str| format!("modules[{i}].{f}");
            if module.app_id.is_empty() {
                return Err(invalid(field("app_id"), "must not be empty"));
            }
            module.resolve_profile().map_err(|m| invalid(field("profile"), m))?;
            let cap = module.max_capacity_mwh.unwrap_or(self.energy.allocation_capacity_mwh);
            if !(cap > 0.0) {
                return Err(invalid(field("max_capacity_mwh"), "must be > 0"));
            }
            let balance = module.initial_balance_mwh.unwrap_or(cap);
            if !(0.0..=cap).contains(&balance) {
                return Err(invalid(
                    field("initial_balance_mwh"),
                    format!("must be in [0, {cap}]"),
                ));
            }
            total_balance += balance;
        }
        if total_balance > self.energy.battery_capacity_mwh + 1e-9 {
            return Err(invalid(
                "energy",
                format!(
                    "initial balances plus reserve ({total_balance} mWh) exceed battery capacity"
                ),
            ));
        }

        match &self.harvest {
            HarvestSource::ConstantPower { power_mw } if *power_mw < 0.0 => {
                return Err(invalid("harvest.power_mw", "must be >= 0"));
            }
            HarvestSource::PowerSchedule { points } => {
                if points.is_empty() {
                    return Err(invalid("harvest.points", "must not be empty"));
                }
                for pair in points.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(invalid("harvest.points", "times must be strictly increasing"));
                    }
                }
                if points.iter().any(|&(_, p)| p < 0.0) {
                    return Err(invalid("harvest.points", "powers must be >= 0"));
                }
            }
            _ => {}
        }
        for (path, spec) in &self.processing_paths {
            if spec.duration_s < 0.0 || spec.power_mw < 0.0 {
                return Err(invalid(
                    format!("processing_paths.{path}"),
                    "duration and power must be >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Per-slot `(app_id, initial_balance, max_capacity)` for the ledger.
    pub fn allocation_table(&self) -> Vec<(String, f64, f64)> {
        self.modules
            .iter()
            .map(|m| {
                let cap = m.max_capacity_mwh.unwrap_or(self.energy.allocation_capacity_mwh);
                let balance = m.initial_balance_mwh.unwrap_or(cap);
                (m.app_id.clone(), balance, cap)
            })
            .collect()
    }
}
