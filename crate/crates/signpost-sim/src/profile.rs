//! Scripted application profiles: state machines of timed phases with a
//! power draw and service-call actions, plus the built-in applications
//! (weather, vehicle counting, RF spectrum scanning, and the duty-cycled /
//! greedy / adaptive energy strategies).

use crate::services::TimeInfo;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("invalid profile: {0}")]
    ProfileInvalid(String),
    #[error("channel {0} has no samples")]
    EmptyChannel(usize),
    #[error("vehicle batch needs {expected} per-second samples, got {got}")]
    BatchSize { expected: usize, got: usize },
}

/// A service call issued when a phase is entered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Enqueue an outbound network message.
    SendBytes {
        len: usize,
        #[serde(default = "default_destination")]
        destination: String,
    },
    /// Append a record to the storage log.
    StorageWrite { len: usize },
    /// Request the current time (GPS-backed).
    GetTime,
    /// Request the platform coordinates.
    GetLocation,
    /// Start a processing job on the Linux co-processor.
    Rpc { path: String },
    /// Ask the platform to power the module off for a while (energy API).
    DutyCycleOff { seconds: f64 },
    /// Publish a BLE advertisement.
    BleAdvertise { len: usize },
    /// Send a payload to another module over the shared bus.
    MessagingSend { dst: String, len: usize },
    /// Start receiving inter-module messages.
    MessagingSubscribe,
    /// Read back the allocation snapshot (energy API).
    EnergyQuery,
    /// Register a low-balance warning callback (energy API).
    EnergySetWarning { threshold_mwh: f64 },
}

fn default_destination() -> String {
    "cloud".to_string()
}

/// One timed phase of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub duration_s: f64,
    pub power_mw: f64,
    #[serde(default)]
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatPolicy {
    /// Cycle through the phases until the run ends.
    Loop,
    /// Run the phase list once.
    Once,
    /// Run the phase list a fixed number of times.
    Count(u32),
}

/// Maps the allocation level (balance / capacity, 0..1) to a rate scale
/// applied to the active-phase power. Linear and monotone by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveRule {
    pub min_scale: f64,
    pub max_scale: f64,
}

impl AdaptiveRule {
    pub fn scale(&self, allocation_level: f64) -> f64 {
        let level = allocation_level.clamp(0.0, 1.0);
        self.min_scale + (self.max_scale - self.min_scale) * level
    }
}

/// A scripted application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleProfile {
    #[serde(default)]
    pub app_id: String,
    pub phases: Vec<Phase>,
    #[serde(default = "default_repeat")]
    pub repeat: RepeatPolicy,
    #[serde(default)]
    pub adaptive: Option<AdaptiveRule>,
}

fn default_repeat() -> RepeatPolicy {
    RepeatPolicy::Loop
}

impl ModuleProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.phases.is_empty() {
            return Err(ProfileError::ProfileInvalid("profile has no phases".into()));
        }
        for (i, phase) in self.phases.iter().enumerate() {
            if !(phase.duration_s > 0.0) {
                return Err(ProfileError::ProfileInvalid(format!(
                    "phase {i}: duration_s must be > 0"
                )));
            }
            if phase.power_mw < 0.0 {
                return Err(ProfileError::ProfileInvalid(format!(
                    "phase {i}: power_mw must be >= 0"
                )));
            }
            for action in &phase.actions {
                match action {
                    Action::SendBytes { len, .. }
                    | Action::StorageWrite { len }
                    | Action::MessagingSend { len, .. }
                    | Action::BleAdvertise { len } => {
                        if *len == 0 {
                            return Err(ProfileError::ProfileInvalid(format!(
                                "phase {i}: zero-length payload"
                            )));
                        }
                    }
                    Action::DutyCycleOff { seconds } => {
                        if *seconds < 0.0 {
                            return Err(ProfileError::ProfileInvalid(format!(
                                "phase {i}: negative duty-cycle window"
                            )));
                        }
                    }
                    _ => {}
                }
            }
        }
        if let Some(rule) = &self.adaptive {
            if !(rule.min_scale >= 0.0 && rule.max_scale >= rule.min_scale) {
                return Err(ProfileError::ProfileInvalid(
                    "adaptive rule needs 0 <= min_scale <= max_scale".into(),
                ));
            }
        }
        if let RepeatPolicy::Count(0) = self.repeat {
            return Err(ProfileError::ProfileInvalid("repeat count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Names accepted by [`builtin_profile`].
pub const BUILTIN_PROFILES: [&str; 6] =
    ["weather", "vehicle_count", "rf_spectrum", "duty_cycled", "greedy", "adaptive"];

/// The built-in application profiles. Active-phase power levels are
/// simulator configuration chosen for the documented qualitative ordering,
/// not measured hardware values.
pub fn builtin_profile(name: &str) -> Option<ModuleProfile> {
    let profile = match name {
        // One sample-and-send burst every ten minutes, module powered off in
        // between via the energy API; well under 4 mW average.
        "weather" => ModuleProfile {
            app_id: "weather".into(),
            phases: vec![
                Phase {
                    duration_s: 2.0,
                    power_mw: 50.0,
                    actions: vec![
                        Action::SendBytes { len: 64, destination: default_destination() },
                        Action::DutyCycleOff { seconds: 598.0 },
                    ],
                },
                Phase { duration_s: 598.0, power_mw: 0.0, actions: vec![] },
            ],
            repeat: RepeatPolicy::Loop,
            adaptive: None,
        },
        // Continuous audio sampling; a timestamped batch every ten seconds.
        "vehicle_count" => ModuleProfile {
            app_id: "vehicle_count".into(),
            phases: vec![Phase {
                duration_s: 10.0,
                power_mw: 80.0,
                actions: vec![
                    Action::GetTime,
                    Action::SendBytes {
                        len: VEHICLE_BATCH_BYTES,
                        destination: default_destination(),
                    },
                ],
            }],
            repeat: RepeatPolicy::Loop,
            adaptive: None,
        },
        // Thirty-second scan at high power, then summary upload and a
        // three-minute power-off.
        "rf_spectrum" => ModuleProfile {
            app_id: "rf_spectrum".into(),
            phases: vec![
                Phase { duration_s: 30.0, power_mw: 400.0, actions: vec![] },
                Phase {
                    duration_s: 180.0,
                    power_mw: 2.0,
                    actions: vec![
                        Action::SendBytes { len: 512, destination: default_destination() },
                        Action::DutyCycleOff { seconds: 180.0 },
                    ],
                },
            ],
            repeat: RepeatPolicy::Loop,
            adaptive: None,
        },
        // Brief activity every ten minutes; allocation stays near cap.
        "duty_cycled" => ModuleProfile {
            app_id: "duty_cycled".into(),
            phases: vec![
                Phase {
                    duration_s: 10.0,
                    power_mw: 100.0,
                    actions: vec![Action::StorageWrite { len: 32 }],
                },
                Phase { duration_s: 590.0, power_mw: 0.0, actions: vec![] },
            ],
            repeat: RepeatPolicy::Loop,
            adaptive: None,
        },
        // Constant 250 mW; unsustainable without harvest.
        "greedy" => ModuleProfile {
            app_id: "greedy".into(),
            phases: vec![Phase { duration_s: 3600.0, power_mw: 250.0, actions: vec![] }],
            repeat: RepeatPolicy::Loop,
            adaptive: None,
        },
        // Sampling rate (and so power) scales with the allocation level.
        "adaptive" => ModuleProfile {
            app_id: "adaptive".into(),
            phases: vec![Phase {
                duration_s: 60.0,
                power_mw: 150.0,
                actions: vec![Action::SendBytes { len: 48, destination: default_destination() }],
            }],
            repeat: RepeatPolicy::Loop,
            adaptive: Some(AdaptiveRule { min_scale: 0.1, max_scale: 1.0 }),
        },
        _ => return None,
    };
    Some(profile)
}

// ---------------------------------------------------------------------------
// Profile execution state machine
// ---------------------------------------------------------------------------

/// Phase entry handed to the simulator: issue the actions, report the power,
/// and schedule the next entry after `duration_s`.
#[derive(Debug, Clone)]
pub struct PhaseEntry {
    pub actions: Vec<Action>,
    pub power_mw: f64,
    pub duration_s: f64,
}

/// Coroutine-style profile runner stepped by the event loop. Gating pauses
/// the phase clock; the interrupted phase resumes where it left off.
#[derive(Debug, Clone)]
pub struct ProfileRunner {
    profile: ModuleProfile,
    next_phase: usize,
    cycles_done: u32,
    finished: bool,
    current_power_mw: f64,
    paused_remaining_s: Option<f64>,
}

impl ProfileRunner {
    pub fn new(profile: ModuleProfile) -> Result<Self, ProfileError> {
        profile.validate()?;
        Ok(ProfileRunner {
            profile,
            next_phase: 0,
            cycles_done: 0,
            finished: false,
            current_power_mw: 0.0,
            paused_remaining_s: None,
        })
    }

    pub fn profile(&self) -> &ModuleProfile {
        &self.profile
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Rail power the module currently reports, mW.
    pub fn power_mw(&self) -> f64 {
        if self.paused_remaining_s.is_some() {
            0.0
        } else {
            self.current_power_mw
        }
    }

    /// Enter the next phase. `allocation_level` feeds the adaptive rule.
    pub fn enter_next_phase(&mut self, allocation_level: f64) -> Option<PhaseEntry> {
        if self.finished {
            return None;
        }
        if self.next_phase >= self.profile.phases.len() {
            self.next_phase = 0;
            self.cycles_done += 1;
            let done = match self.profile.repeat {
                RepeatPolicy::Loop => false,
                RepeatPolicy::Once => true,
                RepeatPolicy::Count(n) => self.cycles_done >= n,
            };
            if done {
                self.finished = true;
                self.current_power_mw = 0.0;
                return None;
            }
        }
        let phase = &self.profile.phases[self.next_phase];
        self.next_phase += 1;
        let scale = self
            .profile
            .adaptive
            .as_ref()
            .map_or(1.0, |rule| rule.scale(allocation_level));
        self.current_power_mw = phase.power_mw * scale;
        Some(PhaseEntry {
            actions: phase.actions.clone(),
            power_mw: self.current_power_mw,
            duration_s: phase.duration_s,
        })
    }

    /// Pause at a gating event, `remaining_s` before the next phase.
    pub fn pause(&mut self, remaining_s: f64) {
        self.paused_remaining_s = Some(remaining_s.max(0.0));
    }

    pub fn is_paused(&self) -> bool {
        self.paused_remaining_s.is_some()
    }

    /// Resume after re-enable; returns the remaining time in the interrupted
    /// phase so the caller can reschedule its end.
    pub fn resume(&mut self) -> f64 {
        self.paused_remaining_s.take().unwrap_or(0.0)
    }
}

// ---------------------------------------------------------------------------
// Vehicle-counting batch format
// ---------------------------------------------------------------------------

/// Audio volume bins sampled by the vehicle counter.
pub const VOLUME_BINS: usize = 7;
/// Per-second averages carried per batch.
pub const BATCH_SECONDS: usize = 10;
/// Encoded batch size: 8-byte timestamp + 7x10 f32 bins.
pub const VEHICLE_BATCH_BYTES: usize = 8 + VOLUME_BINS * BATCH_SECONDS * 4;

/// Average raw per-tick volumes into one 7-bin per-second entry.
pub fn average_volumes(raw: &[[f64; VOLUME_BINS]]) -> [f64; VOLUME_BINS] {
    let mut out = [0.0; VOLUME_BINS];
    if raw.is_empty() {
        return out;
    }
    for sample in raw {
        for (acc, v) in out.iter_mut().zip(sample) {
            *acc += v;
        }
    }
    for acc in &mut out {
        *acc /= raw.len() as f64;
    }
    out
}

/// Pack ten seconds of per-second averaged volume bins behind a timestamp
/// header, ready for the network queue.
pub fn vehicle_batch(
    samples: &[[f64; VOLUME_BINS]],
    time: &TimeInfo,
) -> Result<Vec<u8>, ProfileError> {
    if samples.len() != BATCH_SECONDS {
        return Err(ProfileError::BatchSize { expected: BATCH_SECONDS, got: samples.len() });
    }
    let mut payload = Vec::with_capacity(VEHICLE_BATCH_BYTES);
    payload.extend_from_slice(&time.unix_seconds.to_be_bytes());
    for second in samples {
        for &bin in second {
            payload.extend_from_slice(&(bin as f32).to_be_bytes());
        }
    }
    debug_assert_eq!(payload.len(), VEHICLE_BATCH_BYTES);
    Ok(payload)
}

/// Decode a batch back into (timestamp, bins); inverse of [`vehicle_batch`].
pub fn decode_vehicle_batch(
    payload: &[u8],
) -> Option<(i64, Vec<[f32; VOLUME_BINS]>)> {
    if payload.len() != VEHICLE_BATCH_BYTES {
        return None;
    }
    let ts = i64::from_be_bytes(payload[..8].try_into().ok()?);
    let mut out = Vec::with_capacity(BATCH_SECONDS);
    let mut offset = 8;
    for _ in 0..BATCH_SECONDS {
        let mut bins = [0.0f32; VOLUME_BINS];
        for bin in &mut bins {
            *bin = f32::from_be_bytes(payload[offset..offset + 4].try_into().ok()?);
            offset += 4;
        }
        out.push(bins);
    }
    Some((ts, out))
}

// ---------------------------------------------------------------------------
// RF spectrum scanning
// ---------------------------------------------------------------------------

/// TV whitespace channel centers scanned by the spectrum application, MHz.
pub fn whitespace_channels_mhz() -> Vec<f64> {
    (0..).map(|i| 470.0 + 6.0 * i as f64).take_while(|&f| f <= 830.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

/// Exact per-channel summary statistics over a scan.
pub fn spectrum_scan_summary(
    channel_samples: &[Vec<f64>],
) -> Result<Vec<ChannelSummary>, ProfileError> {
    channel_samples
        .iter()
        .enumerate()
        .map(|(i, samples)| {
            if samples.is_empty() {
                return Err(ProfileError::EmptyChannel(i));
            }
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n;
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for &x in samples {
                min = min.min(x);
                max = max.max(x);
            }
            Ok(ChannelSummary { min, max, mean, stddev: var.sqrt() })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic sensor sources
// ---------------------------------------------------------------------------

/// Synthetic data generator feeding the scripted applications (the real
/// sensor hardware is out of scope; replay lets recorded traces in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorSource {
    Constant { value: f64 },
    Sinusoid { mean: f64, amplitude: f64, period_s: f64 },
    Replay { values: Vec<f64> },
}

impl SensorSource {
    pub fn sample(&self, t_s: f64) -> f64 {
        match self {
            SensorSource::Constant { value } => *value,
            SensorSource::Sinusoid { mean, amplitude, period_s } => {
                mean + amplitude * (std::f64::consts::TAU * t_s / period_s).sin()
            }
            SensorSource::Replay { values } => {
                if values.is_empty() {
                    0.0
                } else {
                    values[(t_s.max(0.0) as usize) % values.len()]
                }
            }
        }
    }
}
