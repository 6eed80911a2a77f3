//! The deterministic discrete-event engine: event queue, the 1 s energy
//! integration tick, scenario execution, trace emission, and the end-of-run
//! conservation audit.
//!
//! Platforms in a scenario are independent (inter-platform meshes are out of
//! scope), so each runs its own event loop. Within a platform, events are
//! processed in nondecreasing time order with ties broken by insertion
//! sequence; power changes take effect at the next tick boundary.

use crate::bus::BusState;
use crate::comm::{CommEngine, CommStats, OutboundMessage, RadioKind, RadioState};
use crate::io::CsvError;
use crate::ledger::{EnergyAudit, EnergyCategory, EnergyLedger, GateTransition};
use crate::profile::{Action, ProfileRunner};
use crate::rng;
use crate::scenario::{HarvestSource, PlatformSpec, Scenario, ScenarioError};
use crate::services::{
    get_location, GpsTracker, MessagingHub, PpsClock, ProcessingCatalog, StorageService,
};
use crate::solar;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Energy integration tick.
pub const TICK_S: f64 = 1.0;
/// Trace aggregation interval (five-minute averages).
pub const TRACE_INTERVAL_S: f64 = 300.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum EventKind {
    /// Enter the next profile phase (or resume point) for one app.
    EnterPhase { app: usize, generation: u32 },
    /// Fixed-step energy integration and bookkeeping.
    Tick,
    /// Periodic LoRaWAN transmit opportunity.
    LoraOpportunity,
    /// Escalation: flush the whole queue over cellular.
    CellularFlush,
    /// Processing job finished; deliver the callback and charge the caller.
    RpcComplete { app: usize, energy_mwh: f64 },
    /// Inter-module message arrives at its subscriber.
    MessageDeliver { dst: usize },
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time).is_eq() && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

// ---------------------------------------------------------------------------
// Harvest input resolution
// ---------------------------------------------------------------------------

/// Harvest power as a step function of simulation time.
#[derive(Debug, Clone)]
enum HarvestCurve {
    None,
    Constant(f64),
    Steps(Vec<(f64, f64)>),
}

impl HarvestCurve {
    fn power_at(&self, t: f64) -> f64 {
        match self {
            HarvestCurve::None => 0.0,
            HarvestCurve::Constant(p) => *p,
            HarvestCurve::Steps(points) => {
                let idx = points.partition_point(|&(pt, _)| pt <= t);
                if idx == 0 {
                    0.0
                } else {
                    points[idx - 1].1
                }
            }
        }
    }
}

fn resolve_harvest(
    spec: &PlatformSpec,
    source: &HarvestSource,
    base_dir: &Path,
    epoch_unix_s: Option<i64>,
) -> Result<(HarvestCurve, i64), SimError> {
    Ok(match source {
        HarvestSource::None => (HarvestCurve::None, epoch_unix_s.unwrap_or(0)),
        HarvestSource::ConstantPower { power_mw } => {
            (HarvestCurve::Constant(*power_mw), epoch_unix_s.unwrap_or(0))
        }
        HarvestSource::PowerSchedule { points } => {
            (HarvestCurve::Steps(points.clone()), epoch_unix_s.unwrap_or(0))
        }
        HarvestSource::IrradianceCsv { path } => {
            let full = if Path::new(path).is_absolute() {
                PathBuf::from(path)
            } else {
                base_dir.join(path)
            };
            let records = crate::io::read_irradiance_csv(&full)?;
            let epoch = epoch_unix_s.unwrap_or(records[0].timestamp);
            let trace = solar::harvest_trace(&records, &spec.panel);
            let steps = trace
                .into_iter()
                .map(|(ts, mw)| ((ts - epoch) as f64, mw))
                .collect();
            (HarvestCurve::Steps(steps), epoch)
        }
    })
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub sensing_mwh: f64,
    pub comm_mwh: f64,
    pub processing_mwh: f64,
    pub time_location_mwh: f64,
    pub storage_mwh: f64,
    pub total_mwh: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GatingInterval {
    pub disabled_at_s: f64,
    /// `None` when still gated at end of run.
    pub enabled_at_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AppCounters {
    pub messages_enqueued: u64,
    pub messages_delivered: u64,
    pub queue_drops: u64,
    pub storage_writes: u64,
    pub rpc_completed: u64,
    pub rpc_cancelled: u64,
    pub messages_received: u64,
    pub service_errors: u64,
    pub energy_warnings: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppSummary {
    pub app_id: String,
    /// Attributed rail power averaged over the run, mW.
    pub avg_power_mw: f64,
    pub attributed: EnergyBreakdown,
    pub final_balance_mwh: f64,
    pub enabled_at_end: bool,
    pub gating: Vec<GatingInterval>,
    pub counters: AppCounters,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusSummary {
    pub transfers: u64,
    pub mean_latency_ms: f64,
    pub mean_attempts: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformSummary {
    pub name: String,
    pub apps: Vec<AppSummary>,
    pub comm: CommStats,
    pub bus: BusSummary,
    pub audit: EnergyAudit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub duration_s: f64,
    pub seed: u64,
    pub platforms: Vec<PlatformSummary>,
}

impl RunSummary {
    pub fn platform(&self, name: &str) -> Option<&PlatformSummary> {
        self.platforms.iter().find(|p| p.name == name)
    }
}

impl PlatformSummary {
    pub fn app(&self, app_id: &str) -> Option<&AppSummary> {
        self.apps.iter().find(|a| a.app_id == app_id)
    }
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

struct TraceFiles {
    energy: BufWriter<fs::File>,
    comm: BufWriter<fs::File>,
    bus: BufWriter<fs::File>,
}

impl TraceFiles {
    fn create(dir: &Path) -> Result<Self, SimError> {
        let open = |name: &str, header: &str| -> Result<BufWriter<fs::File>, SimError> {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(header.as_bytes()).map_err(|e| io_err(&path, e))?;
            Ok(w)
        };
        Ok(TraceFiles {
            energy: open("energy.csv", "t,app_id,avg_power_mw,balance_mwh,enabled,battery_mwh,net_in_mw\n")?,
            comm: open("comm.csv", "t,event,app_id,queue_len,energy_mwh\n")?,
            bus: open("bus.csv", "t,event,app_id,attempts,latency_ms\n")?,
        })
    }
}

// ---------------------------------------------------------------------------
// Per-platform execution
// ---------------------------------------------------------------------------

struct PlatformRun<'a> {
    spec: &'a PlatformSpec,
    duration: f64,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    ledger: EnergyLedger,
    comm: CommEngine,
    bus: BusState,
    pps: PpsClock,
    gps: GpsTracker,
    storage: StorageService,
    processing: ProcessingCatalog,
    messaging: MessagingHub,
    runners: Vec<ProfileRunner>,
    app_ids: Vec<String>,
    duty_off_until: Vec<f64>,
    phase_generation: Vec<u32>,
    phase_end_at: Vec<f64>,
    held_draw_mw: Vec<f64>,
    warning_threshold: Vec<Option<f64>>,
    warning_armed: Vec<bool>,
    counters: Vec<AppCounters>,
    gating: Vec<Vec<GatingInterval>>,
    harvest: HarvestCurve,
    rng_comm: rand_chacha::ChaCha8Rng,
    rng_bus: rand_chacha::ChaCha8Rng,
    traces: TraceFiles,
    trace_dir: PathBuf,
    // Aggregation-window state.
    window_start: f64,
    window_stored_mwh: f64,
    last_rail_cum: Vec<f64>,
    last_tax_cum: f64,
    bus_latency_sum_ms: f64,
    bus_attempts_sum: u64,
    bus_transfers: u64,
}

impl<'a> PlatformRun<'a> {
    fn new(
        spec: &'a PlatformSpec,
        seed: u64,
        duration: f64,
        epoch_unix_s: Option<i64>,
        base_dir: &Path,
        trace_dir: PathBuf,
    ) -> Result<Self, SimError> {
        let n = spec.modules.len();
        let runners: Vec<ProfileRunner> = spec
            .modules
            .iter()
            .map(|m| {
                let profile = m.resolve_profile().map_err(|msg| ScenarioError::Validation {
                    path: format!("platform {}: {}", spec.name, m.app_id),
                    message: msg,
                })?;
                ProfileRunner::new(profile).map_err(|e| ScenarioError::Validation {
                    path: format!("platform {}: {}", spec.name, m.app_id),
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        let app_ids: Vec<String> = spec.modules.iter().map(|m| m.app_id.clone()).collect();
        let (harvest, epoch) = resolve_harvest(spec, &spec.harvest, base_dir, epoch_unix_s)?;
        fs::create_dir_all(&trace_dir).map_err(|e| io_err(&trace_dir, e))?;
        let traces = TraceFiles::create(&trace_dir)?;
        let ledger = EnergyLedger::new(spec.energy, &spec.allocation_table());
        let stored0 = ledger.stored_mwh();
        Ok(PlatformRun {
            spec,
            duration,
            heap: BinaryHeap::new(),
            seq: 0,
            ledger,
            comm: CommEngine::new(
                spec.comm.policy,
                spec.comm.lorawan,
                spec.comm.cellular,
                spec.comm.ble,
            ),
            bus: BusState::new(spec.bus),
            pps: PpsClock::new(seed, &spec.name, spec.time_sync, n, epoch),
            gps: GpsTracker::new(spec.time_sync.gps_power_mw),
            storage: StorageService::new(spec.storage, n),
            processing: ProcessingCatalog::new(
                spec.processing_paths.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            ),
            messaging: MessagingHub::new(app_ids.clone()),
            runners,
            app_ids,
            duty_off_until: vec![f64::NEG_INFINITY; n],
            phase_generation: vec![0; n],
            phase_end_at: vec![0.0; n],
            held_draw_mw: vec![0.0; n],
            warning_threshold: vec![None; n],
            warning_armed: vec![false; n],
            counters: vec![AppCounters::default(); n],
            gating: vec![Vec::new(); n],
            harvest,
            rng_comm: rng::stream(seed, &format!("comm/{}", spec.name)),
            rng_bus: rng::stream(seed, &format!("bus/{}", spec.name)),
            traces,
            trace_dir,
            window_start: 0.0,
            window_stored_mwh: stored0,
            last_rail_cum: vec![0.0; n],
            last_tax_cum: 0.0,
            bus_latency_sum_ms: 0.0,
            bus_attempts_sum: 0,
            bus_transfers: 0,
        })
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time.is_finite());
        self.heap.push(Reverse(Event { time, seq: self.seq, kind }));
        self.seq += 1;
    }

    fn allocation_level(&self, app: usize) -> f64 {
        let a = &self.ledger.allocations()[app];
        if a.max_capacity_mwh > 0.0 {
            a.balance_mwh / a.max_capacity_mwh
        } else {
            0.0
        }
    }

    fn trace_comm(&mut self, t: f64, event: &str, app: usize, queue_len: usize, energy_mwh: f64) {
        let app = self.app_ids[app].clone();
        let _ = writeln!(
            self.traces.comm,
            "{t:.3},{event},{app},{queue_len},{energy_mwh:.9}"
        );
    }

    fn apply_transitions(&mut self, now: f64, transitions: &[GateTransition]) {
        for t in transitions {
            if t.enabled {
                // Resume the interrupted phase for its remaining time.
                let remaining = self.runners[t.app].resume();
                self.phase_generation[t.app] += 1;
                let generation = self.phase_generation[t.app];
                self.phase_end_at[t.app] = now + remaining;
                self.schedule(now + remaining, EventKind::EnterPhase { app: t.app, generation });
                if let Some(interval) = self.gating[t.app].last_mut() {
                    if interval.enabled_at_s.is_none() {
                        interval.enabled_at_s = Some(now);
                    }
                }
            } else {
                // Freeze the phase clock where it stopped.
                let remaining = (self.phase_end_at[t.app] - now).max(0.0);
                self.runners[t.app].pause(remaining);
                self.phase_generation[t.app] += 1; // invalidate pending phase end
                self.gating[t.app].push(GatingInterval { disabled_at_s: now, enabled_at_s: None });
            }
        }
    }

    fn attribute_gps(&mut self, now: f64, usage: crate::services::GpsUsage) {
        if usage.requests.is_empty() {
            return;
        }
        let share = usage.energy_mwh / usage.requests.len() as f64;
        let mut transitions = Vec::new();
        for &app in &usage.requests {
            if let Some(t) = self.ledger.service_debit(app, share, EnergyCategory::TimeLocation) {
                transitions.push(t);
            }
        }
        self.apply_transitions(now, &transitions);
    }

    /// Deterministic filler bytes for synthetic payloads.
    fn synth_payload(app: usize, counter: u64, len: usize) -> Vec<u8> {
        (0..len).map(|i| (app as u64 + counter + i as u64) as u8).collect()
    }

    fn execute_actions(&mut self, now: f64, app: usize, actions: &[Action]) {
        for action in actions {
            match action {
                Action::SendBytes { len, destination } => {
                    let msg = OutboundMessage {
                        app,
                        payload_len: *len,
                        enqueue_time_s: now,
                        destination: destination.clone(),
                    };
                    match self.comm.enqueue(msg) {
                        Ok(out) => {
                            self.counters[app].messages_enqueued += 1;
                            self.trace_comm(now, "enqueue", app, out.queue_len, 0.0);
                            if out.schedule_flush {
                                self.schedule(now, EventKind::CellularFlush);
                            }
                        }
                        Err(_) => self.counters[app].queue_drops += 1,
                    }
                }
                Action::StorageWrite { len } => {
                    let payload =
                        Self::synth_payload(app, self.counters[app].storage_writes, *len);
                    match self.storage.storage_write(app, true, now, &payload) {
                        Ok(_) => {
                            self.counters[app].storage_writes += 1;
                            let cost = self.spec.storage.write_cost_mwh;
                            let t = self.ledger.service_debit(app, cost, EnergyCategory::Storage);
                            if let Some(t) = t {
                                self.apply_transitions(now, &[t]);
                            }
                        }
                        Err(_) => self.counters[app].service_errors += 1,
                    }
                }
                Action::GetTime => {
                    let _ = self.pps.get_time(app, true, now);
                    if let Some(usage) = self.gps.request(app, now) {
                        self.attribute_gps(now, usage);
                    }
                }
                Action::GetLocation => {
                    let _ = get_location(true, self.spec.panel.latitude_deg, self.spec.panel.longitude_deg);
                    if let Some(usage) = self.gps.request(app, now) {
                        self.attribute_gps(now, usage);
                    }
                }
                Action::Rpc { path } => match self.processing.processing_call_rpc(app, true, path) {
                    Ok(job) => {
                        self.schedule(
                            now + job.duration_s,
                            EventKind::RpcComplete { app, energy_mwh: job.energy_mwh },
                        );
                    }
                    Err(_) => self.counters[app].service_errors += 1,
                },
                Action::DutyCycleOff { seconds } => {
                    self.duty_off_until[app] = self.duty_off_until[app].max(now + seconds);
                }
                Action::BleAdvertise { len } => {
                    let payload = Self::synth_payload(app, 0, *len);
                    match self.comm.ble_advertise(app, &payload) {
                        Ok(()) => {
                            let queue_len = self.comm.queue_len();
                            self.trace_comm(now, "ble_adv", app, queue_len, 0.0);
                        }
                        Err(_) => self.counters[app].service_errors += 1,
                    }
                }
                Action::MessagingSend { dst, len } => match self.messaging.messaging_send(true, dst) {
                    Ok(dst_idx) => {
                        let transfer = self.bus.send(now, (*len as u64) * 8, &mut self.rng_bus);
                        let name = self.app_ids[app].clone();
                        let _ = writeln!(
                            self.traces.bus,
                            "{now:.3},bus_tx,{name},{},{:.6}",
                            transfer.attempts,
                            transfer.latency_s * 1e3
                        );
                        self.bus_transfers += 1;
                        self.bus_latency_sum_ms += transfer.latency_s * 1e3;
                        self.bus_attempts_sum += u64::from(transfer.attempts);
                        self.schedule(
                            now + transfer.latency_s,
                            EventKind::MessageDeliver { dst: dst_idx },
                        );
                    }
                    Err(_) => self.counters[app].service_errors += 1,
                },
                Action::MessagingSubscribe => self.messaging.messaging_subscribe(app),
                Action::EnergyQuery => {
                    // Snapshot read; nothing to charge.
                    let _ = &self.ledger.allocations()[app];
                }
                Action::EnergySetWarning { threshold_mwh } => {
                    self.warning_threshold[app] = Some(*threshold_mwh);
                    self.warning_armed[app] = true;
                }
            }
        }
    }

    fn enter_phase(&mut self, now: f64, app: usize, generation: u32) {
        if generation != self.phase_generation[app]
            || self.runners[app].is_paused()
            || self.runners[app].is_finished()
        {
            return;
        }
        let level = self.allocation_level(app);
        if let Some(entry) = self.runners[app].enter_next_phase(level) {
            self.phase_end_at[app] = now + entry.duration_s;
            self.schedule(now + entry.duration_s, EventKind::EnterPhase { app, generation });
            // A module that asked to be powered off skips its actions until
            // the platform wakes it again.
            if self.duty_off_until[app] <= now {
                self.execute_actions(now, app, &entry.actions);
            }
        }
    }

    fn tick(&mut self, now: f64) {
        if now > 0.0 {
            // Integrate the past second with the draws latched at its start.
            let harvest = self.harvest.power_at(now - TICK_S);
            let draws = self.held_draw_mw.clone();
            let (_battery, transitions) = self.ledger.step_accounting(TICK_S, harvest, &draws);
            self.apply_transitions(now, &transitions);

            // BLE advertising accrual.
            if let Some((app, energy)) = self.comm.ble_interval_energy(TICK_S) {
                if let Some(t) = self.ledger.service_debit(app, energy, EnergyCategory::Comm) {
                    self.apply_transitions(now, &[t]);
                }
            }

            // GPS window expiry.
            if let Some(usage) = self.gps.expire(now) {
                self.attribute_gps(now, usage);
            }

            // Low-balance warnings.
            for app in 0..self.runners.len() {
                if let Some(threshold) = self.warning_threshold[app] {
                    let balance = self.ledger.allocations()[app].balance_mwh;
                    if self.warning_armed[app] && balance <= threshold {
                        self.counters[app].energy_warnings += 1;
                        self.warning_armed[app] = false;
                    } else if !self.warning_armed[app] && balance > threshold {
                        self.warning_armed[app] = true;
                    }
                }
            }
        }

        // Latch rail draws for the coming second.
        for app in 0..self.runners.len() {
            let off = self.duty_off_until[app] > now;
            self.held_draw_mw[app] = if off { 0.0 } else { self.runners[app].power_mw() };
        }

        // Trace aggregation on interval boundaries; the window containing
        // the end of the run is flushed after final attribution instead.
        if now > 0.0 && now < self.duration && (now / TRACE_INTERVAL_S).fract() == 0.0 {
            self.flush_trace_window(now);
        }

        let next = now + TICK_S;
        if next <= self.duration {
            self.schedule(next, EventKind::Tick);
        }
    }

    fn flush_trace_window(&mut self, now: f64) {
        let dt = now - self.window_start;
        if dt <= 0.0 {
            return;
        }
        let hours = dt / 3600.0;
        let battery = self.ledger.stored_mwh();
        let net_in_mw = (battery - self.window_stored_mwh) / hours;
        for app in 0..self.runners.len() {
            let cum: f64 = self.ledger.attributed_by_category(app).iter().sum();
            let rail = cum - self.last_rail_cum[app];
            self.last_rail_cum[app] = cum;
            let avg_mw = rail / hours;
            let alloc = &self.ledger.allocations()[app];
            let name = &self.app_ids[app];
            let _ = writeln!(
                self.traces.energy,
                "{now:.3},{name},{avg_mw:.6},{:.6},{},{battery:.6},{net_in_mw:.6}",
                alloc.balance_mwh, alloc.enabled
            );
        }
        // Platform overhead row: the tax actually collected this window.
        let audit = self.ledger.audit();
        let tax_delta = audit.tax_paid_mwh - self.last_tax_cum;
        self.last_tax_cum = audit.tax_paid_mwh;
        let reserve = self.ledger.reserve_mwh();
        let _ = writeln!(
            self.traces.energy,
            "{now:.3},platform,{:.6},{reserve:.6},true,{battery:.6},{net_in_mw:.6}",
            tax_delta / hours
        );
        self.window_start = now;
        self.window_stored_mwh = battery;
    }

    fn lora_opportunity(&mut self, now: f64) {
        // The cellular session owns the radio front end while active.
        if self.comm.radio_state(RadioKind::Cellular, now) != RadioState::Active {
            let events = self.comm.lora_opportunity(&mut self.rng_comm);
            let mut transitions = Vec::new();
            for ev in &events {
                if let Some(t) =
                    self.ledger.service_debit(ev.app, ev.attempt.energy_mwh, EnergyCategory::Comm)
                {
                    transitions.push(t);
                }
                let label = if ev.attempt.delivered { "lora_tx" } else { "lora_fail" };
                if ev.attempt.delivered {
                    self.counters[ev.app].messages_delivered += 1;
                }
                self.trace_comm(now, label, ev.app, ev.queue_len_after, ev.attempt.energy_mwh);
            }
            self.apply_transitions(now, &transitions);
        }
        let next = now + self.spec.comm.policy.lora_retry_interval_s;
        if next <= self.duration {
            self.schedule(next, EventKind::LoraOpportunity);
        }
    }

    fn cellular_flush(&mut self, now: f64) {
        let flush = self.comm.cellular_flush(now);
        let mut remaining = flush.deliveries.len();
        let mut transitions = Vec::new();
        for d in &flush.deliveries {
            remaining -= 1;
            if let Some(t) =
                self.ledger.service_debit(d.app, d.energy_share_mwh, EnergyCategory::Comm)
            {
                transitions.push(t);
            }
            self.counters[d.app].messages_delivered += 1;
            self.trace_comm(now, "cell_flush", d.app, remaining, d.energy_share_mwh);
        }
        self.apply_transitions(now, &transitions);
    }

    fn run(mut self) -> Result<PlatformSummary, SimError> {
        // Initial phase entries first so the tick at t=0 latches their draw.
        for app in 0..self.runners.len() {
            self.schedule(0.0, EventKind::EnterPhase { app, generation: 0 });
        }
        self.schedule(0.0, EventKind::Tick);
        let lora_interval = self.spec.comm.policy.lora_retry_interval_s;
        if lora_interval <= self.duration {
            self.schedule(lora_interval, EventKind::LoraOpportunity);
        }

        let mut clock = 0.0f64;
        while let Some(Reverse(event)) = self.heap.pop() {
            debug_assert!(event.time >= clock, "event would run before the clock");
            if event.time > self.duration {
                continue;
            }
            clock = event.time;
            match event.kind {
                EventKind::EnterPhase { app, generation } => {
                    self.enter_phase(clock, app, generation)
                }
                EventKind::Tick => self.tick(clock),
                EventKind::LoraOpportunity => self.lora_opportunity(clock),
                EventKind::CellularFlush => self.cellular_flush(clock),
                EventKind::RpcComplete { app, energy_mwh } => {
                    if self.ledger.is_enabled(app) {
                        if let Some(t) =
                            self.ledger.service_debit(app, energy_mwh, EnergyCategory::Processing)
                        {
                            self.apply_transitions(clock, &[t]);
                        }
                        self.counters[app].rpc_completed += 1;
                    } else {
                        self.counters[app].rpc_cancelled += 1;
                    }
                }
                EventKind::MessageDeliver { dst } => {
                    self.counters[dst].messages_received += 1;
                }
            }
        }

        // Close out the run.
        if let Some(usage) = self.gps.finish() {
            self.attribute_gps(self.duration, usage);
        }
        self.flush_trace_window(self.duration);
        self.write_storage_dump()?;

        let duration_h = self.duration / 3600.0;
        let apps = (0..self.runners.len())
            .map(|app| {
                let by_cat = self.ledger.attributed_by_category(app);
                let total: f64 = by_cat.iter().sum();
                let alloc = &self.ledger.allocations()[app];
                AppSummary {
                    app_id: self.app_ids[app].clone(),
                    avg_power_mw: total / duration_h,
                    attributed: EnergyBreakdown {
                        sensing_mwh: by_cat[0],
                        comm_mwh: by_cat[1],
                        processing_mwh: by_cat[2],
                        time_location_mwh: by_cat[3],
                        storage_mwh: by_cat[4],
                        total_mwh: total,
                    },
                    final_balance_mwh: alloc.balance_mwh,
                    enabled_at_end: alloc.enabled,
                    gating: self.gating[app].clone(),
                    counters: self.counters[app].clone(),
                }
            })
            .collect();

        let bus = BusSummary {
            transfers: self.bus_transfers,
            mean_latency_ms: if self.bus_transfers > 0 {
                self.bus_latency_sum_ms / self.bus_transfers as f64
            } else {
                0.0
            },
            mean_attempts: if self.bus_transfers > 0 {
                self.bus_attempts_sum as f64 / self.bus_transfers as f64
            } else {
                0.0
            },
        };

        let mut energy = self.traces.energy;
        let mut comm_file = self.traces.comm;
        let mut bus_file = self.traces.bus;
        let dir = self.trace_dir.clone();
        energy.flush().map_err(|e| io_err(&dir, e))?;
        comm_file.flush().map_err(|e| io_err(&dir, e))?;
        bus_file.flush().map_err(|e| io_err(&dir, e))?;

        Ok(PlatformSummary {
            name: self.spec.name.clone(),
            apps,
            comm: self.comm.stats(),
            bus,
            audit: self.ledger.audit(),
        })
    }

    fn write_storage_dump(&mut self) -> Result<(), SimError> {
        let path = self.trace_dir.join("storage.csv");
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "app_id,record_id,timestamp,hex_payload")?;
            for r in self.storage.records() {
                let hex: String = r.payload.iter().map(|b| format!("{b:02x}")).collect();
                writeln!(
                    w,
                    "{},{},{:.3},{hex}",
                    self.app_ids[r.app], r.record_id, r.timestamp_s
                )?;
            }
            w.flush()
        })()
        .map_err(|e| io_err(&path, e))
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Run a scenario, writing traces under `out_dir` (per-platform
/// subdirectories when there is more than one platform) plus a
/// `summary.json`, and returning the summary.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunSummary, SimError> {
    run_with_base(scenario, Path::new("."), out_dir)
}

/// As [`run`], resolving relative input paths against `base_dir`.
pub fn run_with_base(
    scenario: &Scenario,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<RunSummary, SimError> {
    scenario.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let seed = scenario.seed.unwrap_or(0);
    let epoch = scenario.epoch_unix_s();
    let single = scenario.platforms.len() == 1;
    let mut platforms = Vec::with_capacity(scenario.platforms.len());
    for spec in &scenario.platforms {
        let trace_dir =
            if single { out_dir.to_path_buf() } else { out_dir.join(&spec.name) };
        let run = PlatformRun::new(spec, seed, scenario.duration_s, epoch, base_dir, trace_dir)?;
        platforms.push(run.run()?);
    }
    let summary = RunSummary { duration_s: scenario.duration_s, seed, platforms };
    let path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    Ok(summary)
}
