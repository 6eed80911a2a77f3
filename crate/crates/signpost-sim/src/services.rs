//! Control-module services: time and location from GPS with a shared PPS
//! signal, append-only storage, processing offload, and inter-module
//! messaging. Every service charges its energy to the calling application;
//! gated applications get `ServiceUnavailable` from all of them.

use crate::rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ServiceError {
    /// The caller's allocation is depleted and the module is gated.
    #[error("service unavailable: application is gated")]
    ServiceUnavailable,
    #[error("storage full: {used} of {capacity} bytes used")]
    StorageFull { used: u64, capacity: u64 },
    #[error("unknown processing path: {0}")]
    UnknownPath(String),
    #[error("no such module: {0}")]
    NoSuchModule(String),
    #[error("no subscriber on module: {0}")]
    NoSubscriber(String),
    #[error("empty payload")]
    EmptyPayload,
}

fn guard(enabled: bool) -> Result<(), ServiceError> {
    if enabled {
        Ok(())
    } else {
        Err(ServiceError::ServiceUnavailable)
    }
}

// ---------------------------------------------------------------------------
// Time and synchronization
// ---------------------------------------------------------------------------

/// Calibration of the GPS/PPS synchronization quality.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSyncModel {
    /// Mean cross-platform PPS offset, ns.
    pub mean_offset_ns: f64,
    /// 95th-percentile cross-platform offset, ns.
    pub p95_offset_ns: f64,
    /// Worst within-platform module-to-module skew, ns.
    pub inter_module_skew_ns: f64,
    /// GPS receiver draw while tracking satellites, mW.
    pub gps_power_mw: f64,
}

impl Default for TimeSyncModel {
    fn default() -> Self {
        TimeSyncModel {
            mean_offset_ns: 75.0,
            p95_offset_ns: 97.0,
            inter_module_skew_ns: 6.0,
            gps_power_mw: 40.0,
        }
    }
}

impl TimeSyncModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mean_offset_ns >= 0.0 && self.p95_offset_ns >= self.mean_offset_ns) {
            return Err("time_sync requires p95 >= mean >= 0".into());
        }
        if self.inter_module_skew_ns < 0.0 || self.gps_power_mw < 0.0 {
            return Err("time_sync skew and power must be >= 0".into());
        }
        Ok(())
    }

    /// Normal sigma matching the configured p95 (one-sided 1.645 sigma).
    pub fn sigma_ns(&self) -> f64 {
        (self.p95_offset_ns - self.mean_offset_ns) / 1.645
    }

    /// Sample one cross-platform PPS offset magnitude (ns): a normal around
    /// the mean, truncated at zero so both reported statistics hold.
    pub fn sample_cross_platform_offset_ns<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        rng::truncated_normal(rng, self.mean_offset_ns, self.sigma_ns())
    }
}

/// What a time request returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInfo {
    /// Simulated UTC seconds (scenario epoch plus simulation time).
    pub unix_seconds: i64,
    /// Sub-second part, ns, as observed by the calling module (includes the
    /// platform edge error and the module's routing skew).
    pub subsec_ns: f64,
    /// Observed clock error versus true time, ns.
    pub observed_error_ns: f64,
}

/// Per-platform PPS clock. Edges occur every nominal second; the edge error
/// is a pure function of the seed and edge index so sampling order never
/// matters, and all modules on the platform share it.
#[derive(Debug, Clone)]
pub struct PpsClock {
    seed: u64,
    platform: String,
    model: TimeSyncModel,
    module_skew_ns: Vec<f64>,
    epoch_unix_s: i64,
}

impl PpsClock {
    pub fn new(
        seed: u64,
        platform: &str,
        model: TimeSyncModel,
        n_modules: usize,
        epoch_unix_s: i64,
    ) -> Self {
        // Static per-module routing skew within the configured bound.
        let mut skew_rng = rng::stream(seed, &format!("pps-skew/{platform}"));
        let module_skew_ns = (0..n_modules)
            .map(|_| rand::Rng::gen_range(&mut skew_rng, 0.0..=model.inter_module_skew_ns))
            .collect();
        PpsClock { seed, platform: platform.to_string(), model, module_skew_ns, epoch_unix_s }
    }

    pub fn model(&self) -> &TimeSyncModel {
        &self.model
    }

    /// Platform-wide error of a given PPS edge, ns. Signed half of a sampled
    /// cross-platform offset, so the difference between two platforms'
    /// edges follows the calibrated distribution in magnitude.
    pub fn edge_error_ns(&self, edge_index: u64) -> f64 {
        let mut r = rng::stream(self.seed, &format!("pps/{}/{edge_index}", self.platform));
        let magnitude = self.model.sample_cross_platform_offset_ns(&mut r);
        let sign = if rand::Rng::gen_bool(&mut r, 0.5) { 1.0 } else { -1.0 };
        sign * magnitude / 2.0
    }

    fn module_skew(&self, module: usize) -> f64 {
        self.module_skew_ns.get(module).copied().unwrap_or(0.0)
    }

    /// Current time as observed by `module`, given true simulation time.
    pub fn get_time(
        &self,
        module: usize,
        enabled: bool,
        sim_time_s: f64,
    ) -> Result<TimeInfo, ServiceError> {
        guard(enabled)?;
        let edge = sim_time_s.floor() as u64;
        let error_ns = self.edge_error_ns(edge) + self.module_skew(module);
        let true_ns = sim_time_s.fract() * 1e9;
        let unix_seconds = self.epoch_unix_s + sim_time_s.floor() as i64;
        Ok(TimeInfo { unix_seconds, subsec_ns: true_ns + error_ns, observed_error_ns: error_ns })
    }

    /// UTC second boundary of the next PPS edge after `sim_time_s`.
    pub fn get_time_of_next_pps(
        &self,
        module: usize,
        enabled: bool,
        sim_time_s: f64,
    ) -> Result<TimeInfo, ServiceError> {
        guard(enabled)?;
        let edge = sim_time_s.floor() as u64 + 1;
        let error_ns = self.edge_error_ns(edge) + self.module_skew(module);
        Ok(TimeInfo {
            unix_seconds: self.epoch_unix_s + edge as i64,
            subsec_ns: error_ns,
            observed_error_ns: error_ns,
        })
    }
}

// ---------------------------------------------------------------------------
// GPS duty cycling and energy attribution
// ---------------------------------------------------------------------------

/// GPS power window bookkeeping. The receiver is powered only while a
/// request window is open, including a tracking warm-up; window energy is
/// split across requesters by request count.
#[derive(Debug, Clone)]
pub struct GpsTracker {
    power_mw: f64,
    warmup_s: f64,
    hold_s: f64,
    window: Option<GpsWindow>,
}

#[derive(Debug, Clone)]
struct GpsWindow {
    start_s: f64,
    end_s: f64,
    requests: Vec<usize>,
}

/// A finished GPS power window awaiting attribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GpsUsage {
    pub duration_s: f64,
    pub energy_mwh: f64,
    /// One entry per request (repeat requesters pay per request).
    pub requests: Vec<usize>,
}

/// Tracking warm-up before a fix, seconds.
pub const GPS_WARMUP_S: f64 = 30.0;
/// How long the receiver stays up past the last request, seconds.
pub const GPS_HOLD_S: f64 = 1.0;

impl GpsTracker {
    pub fn new(power_mw: f64) -> Self {
        GpsTracker { power_mw, warmup_s: GPS_WARMUP_S, hold_s: GPS_HOLD_S, window: None }
    }

    fn close(&mut self) -> Option<GpsUsage> {
        self.window.take().map(|w| GpsUsage {
            duration_s: w.end_s - w.start_s,
            energy_mwh: self.power_mw * (w.end_s - w.start_s) / 3600.0,
            requests: w.requests,
        })
    }

    /// Record a time/location request. Returns a closed window when a
    /// previous one had already expired.
    pub fn request(&mut self, app: usize, now_s: f64) -> Option<GpsUsage> {
        let mut closed = None;
        match &mut self.window {
            Some(w) if now_s <= w.end_s => {
                w.end_s = w.end_s.max(now_s + self.hold_s);
                w.requests.push(app);
            }
            _ => {
                closed = self.close();
                self.window = Some(GpsWindow {
                    start_s: now_s,
                    end_s: now_s + self.warmup_s + self.hold_s,
                    requests: vec![app],
                });
            }
        }
        closed
    }

    /// Close the window if it has expired by `now_s`.
    pub fn expire(&mut self, now_s: f64) -> Option<GpsUsage> {
        match &self.window {
            Some(w) if now_s > w.end_s => self.close(),
            _ => None,
        }
    }

    /// Close any open window at end of run.
    pub fn finish(&mut self) -> Option<GpsUsage> {
        self.close()
    }

    pub fn is_tracking(&self) -> bool {
        self.window.is_some()
    }
}

// ---------------------------------------------------------------------------
// Storage
// ---------------------------------------------------------------------------

/// Handle returned by a storage write.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageRecordHandle {
    pub app: usize,
    pub record_id: u64,
    pub length: usize,
    pub timestamp_s: f64,
}

/// An immutable stored record.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageRecord {
    pub app: usize,
    pub record_id: u64,
    pub timestamp_s: f64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub capacity_bytes: u64,
    /// SD activation cost per write (rail-level mWh), attributed to the
    /// writing application.
    pub write_cost_mwh: f64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig { capacity_bytes: 1 << 30, write_cost_mwh: 0.005 }
    }
}

/// Append-only record log, one id sequence per application.
#[derive(Debug, Clone)]
pub struct StorageService {
    config: StorageConfig,
    used_bytes: u64,
    next_id: Vec<u64>,
    records: Vec<StorageRecord>,
}

impl StorageService {
    pub fn new(config: StorageConfig, n_apps: usize) -> Self {
        StorageService { config, used_bytes: 0, next_id: vec![0; n_apps], records: Vec::new() }
    }

    pub fn config(&self) -> &StorageConfig {
        &self.config
    }

    /// Append a record for `app`. The returned handle carries the app-local
    /// monotonically increasing record id.
    pub fn storage_write(
        &mut self,
        app: usize,
        enabled: bool,
        now_s: f64,
        payload: &[u8],
    ) -> Result<StorageRecordHandle, ServiceError> {
        guard(enabled)?;
        if payload.is_empty() {
            return Err(ServiceError::EmptyPayload);
        }
        let new_used = self.used_bytes + payload.len() as u64;
        if new_used > self.config.capacity_bytes {
            return Err(ServiceError::StorageFull {
                used: self.used_bytes,
                capacity: self.config.capacity_bytes,
            });
        }
        self.used_bytes = new_used;
        let record_id = self.next_id[app];
        self.next_id[app] += 1;
        self.records.push(StorageRecord {
            app,
            record_id,
            timestamp_s: now_s,
            payload: payload.to_vec(),
        });
        Ok(StorageRecordHandle { app, record_id, length: payload.len(), timestamp_s: now_s })
    }

    pub fn records(&self) -> &[StorageRecord] {
        &self.records
    }

    pub fn records_for(&self, app: usize) -> impl Iterator<Item = &StorageRecord> {
        self.records.iter().filter(move |r| r.app == app)
    }
}

// ---------------------------------------------------------------------------
// Processing offload
// ---------------------------------------------------------------------------

/// A configured processing path: running a job on the Linux co-processor
/// takes `duration_s` at `power_mw`, attributed to the caller.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProcessingPath {
    pub duration_s: f64,
    pub power_mw: f64,
}

/// Catalog of processing paths exposed by the platform.
#[derive(Debug, Clone, Default)]
pub struct ProcessingCatalog {
    paths: HashMap<String, ProcessingPath>,
}

/// A scheduled processing job; the completion callback fires after
/// `duration_s` and `energy_mwh` is charged to the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessingJob {
    pub app: usize,
    pub duration_s: f64,
    pub energy_mwh: f64,
}

impl ProcessingCatalog {
    pub fn new(paths: HashMap<String, ProcessingPath>) -> Self {
        ProcessingCatalog { paths }
    }

    pub fn processing_call_rpc(
        &self,
        app: usize,
        enabled: bool,
        path: &str,
    ) -> Result<ProcessingJob, ServiceError> {
        guard(enabled)?;
        let spec = self.paths.get(path).ok_or_else(|| ServiceError::UnknownPath(path.into()))?;
        Ok(ProcessingJob {
            app,
            duration_s: spec.duration_s,
            energy_mwh: spec.power_mw * spec.duration_s / 3600.0,
        })
    }
}

// ---------------------------------------------------------------------------
// Inter-module messaging
// ---------------------------------------------------------------------------

/// Subscription table for module-to-module messages. Payloads ride the
/// shared bus; the simulator applies bus latency before delivery.
#[derive(Debug, Clone)]
pub struct MessagingHub {
    names: Vec<String>,
    subscribed: Vec<bool>,
}

impl MessagingHub {
    pub fn new(names: Vec<String>) -> Self {
        let n = names.len();
        MessagingHub { names, subscribed: vec![false; n] }
    }

    pub fn messaging_subscribe(&mut self, app: usize) {
        self.subscribed[app] = true;
    }

    /// Validate a send and resolve the destination index. The caller then
    /// carries the payload over the bus model.
    pub fn messaging_send(
        &self,
        enabled: bool,
        dst_module: &str,
    ) -> Result<usize, ServiceError> {
        guard(enabled)?;
        let dst = self
            .names
            .iter()
            .position(|n| n == dst_module)
            .ok_or_else(|| ServiceError::NoSuchModule(dst_module.into()))?;
        if !self.subscribed[dst] {
            return Err(ServiceError::NoSubscriber(dst_module.into()));
        }
        Ok(dst)
    }
}

/// Fixed platform coordinates (the platform is stationary).
pub fn get_location(
    enabled: bool,
    latitude_deg: f64,
    longitude_deg: f64,
) -> Result<(f64, f64), ServiceError> {
    guard(enabled)?;
    Ok((latitude_deg, longitude_deg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn within_platform_skew_is_bounded() {
        let clock = PpsClock::new(11, "p0", TimeSyncModel::default(), 5, 0);
        for t in [0.0, 10.4, 999.99] {
            let times: Vec<TimeInfo> =
                (0..5).map(|m| clock.get_time(m, true, t).unwrap()).collect();
            for a in &times {
                for b in &times {
                    assert!(
                        (a.observed_error_ns - b.observed_error_ns).abs() <= 6.0 + 1e-9,
                        "module skew exceeded bound"
                    );
                }
            }
        }
    }

    #[test]
    fn modules_share_the_edge_error() {
        let clock = PpsClock::new(3, "p0", TimeSyncModel::default(), 3, 0);
        // Two edges; the platform-wide error component is identical for all
        // modules, and stable across repeated queries.
        assert_eq!(clock.edge_error_ns(42), clock.edge_error_ns(42));
        assert_ne!(clock.edge_error_ns(42), clock.edge_error_ns(43));
    }

    #[test]
    fn next_pps_is_the_following_second() {
        let clock = PpsClock::new(1, "p0", TimeSyncModel::default(), 1, 1_500_000_000);
        let t = clock.get_time_of_next_pps(0, true, 10.4).unwrap();
        assert_eq!(t.unix_seconds, 1_500_000_011);
        let t = clock.get_time_of_next_pps(0, true, 10.0).unwrap();
        assert_eq!(t.unix_seconds, 1_500_000_011);
    }

    #[test]
    fn sampled_offsets_match_calibration() {
        let model = TimeSyncModel::default();
        let mut rng = crate::rng::stream(77, "timesync-test");
        let n = 10_000;
        let mut xs: Vec<f64> =
            (0..n).map(|_| model.sample_cross_platform_offset_ns(&mut rng)).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let p95 = xs[(0.95 * n as f64) as usize];
        assert!((mean - 75.0).abs() < 3.0, "mean {mean}");
        assert!((p95 - 97.0).abs() < 5.0, "p95 {p95}");
    }

    #[test]
    fn cross_platform_edge_difference_matches_model() {
        // The difference between two platforms' observed edges stays in the
        // same magnitude range as the calibrated offsets.
        let a = PpsClock::new(5, "a", TimeSyncModel::default(), 1, 0);
        let b = PpsClock::new(5, "b", TimeSyncModel::default(), 1, 0);
        let mut sum = 0.0;
        let n = 2_000;
        for k in 0..n {
            sum += (a.edge_error_ns(k) - b.edge_error_ns(k)).abs();
        }
        let mean = sum / n as f64;
        // Half-offsets with random signs: mean absolute difference lands
        // near the configured mean when signs differ, near sigma otherwise.
        assert!(mean > 30.0 && mean < 120.0, "mean |diff| {mean}");
    }

    #[test]
    fn gated_app_gets_service_unavailable() {
        let clock = PpsClock::new(1, "p0", TimeSyncModel::default(), 1, 0);
        assert_eq!(clock.get_time(0, false, 5.0), Err(ServiceError::ServiceUnavailable));
        assert_eq!(
            clock.get_time_of_next_pps(0, false, 5.0),
            Err(ServiceError::ServiceUnavailable)
        );
        let mut storage = StorageService::new(StorageConfig::default(), 1);
        assert_eq!(
            storage.storage_write(0, false, 0.0, b"x"),
            Err(ServiceError::ServiceUnavailable)
        );
        let catalog = ProcessingCatalog::default();
        assert_eq!(
            catalog.processing_call_rpc(0, false, "p"),
            Err(ServiceError::ServiceUnavailable)
        );
        let hub = MessagingHub::new(vec!["a".into()]);
        assert_eq!(hub.messaging_send(false, "a"), Err(ServiceError::ServiceUnavailable));
        assert_eq!(get_location(false, 1.0, 2.0), Err(ServiceError::ServiceUnavailable));
    }

    #[test]
    fn storage_ids_increase_per_app() {
        let mut storage = StorageService::new(StorageConfig::default(), 2);
        let h0 = storage.storage_write(0, true, 1.0, b"one").unwrap();
        let h1 = storage.storage_write(0, true, 2.0, b"two").unwrap();
        let other = storage.storage_write(1, true, 3.0, b"three").unwrap();
        assert_eq!((h0.record_id, h1.record_id), (0, 1));
        assert_eq!(other.record_id, 0, "id sequences are per app");
        let payloads: Vec<&[u8]> = storage.records_for(0).map(|r| r.payload.as_slice()).collect();
        assert_eq!(payloads, vec![b"one".as_slice(), b"two".as_slice()]);
    }

    #[test]
    fn storage_full_and_empty_payload() {
        let config = StorageConfig { capacity_bytes: 10, ..Default::default() };
        let mut storage = StorageService::new(config, 1);
        storage.storage_write(0, true, 0.0, b"12345678").unwrap();
        assert!(matches!(
            storage.storage_write(0, true, 1.0, b"overflow"),
            Err(ServiceError::StorageFull { .. })
        ));
        assert_eq!(storage.storage_write(0, true, 1.0, b""), Err(ServiceError::EmptyPayload));
    }

    #[test]
    fn rpc_energy_matches_duration_times_power() {
        let mut paths = HashMap::new();
        paths.insert("classify".to_string(), ProcessingPath { duration_s: 2.0, power_mw: 500.0 });
        paths.insert("noop".to_string(), ProcessingPath { duration_s: 0.0, power_mw: 500.0 });
        let catalog = ProcessingCatalog::new(paths);
        let job = catalog.processing_call_rpc(0, true, "classify").unwrap();
        assert_abs_diff_eq!(job.energy_mwh, 0.2778, epsilon = 1e-4);
        let job = catalog.processing_call_rpc(0, true, "noop").unwrap();
        assert_eq!(job.energy_mwh, 0.0);
        assert_eq!(
            catalog.processing_call_rpc(0, true, "missing"),
            Err(ServiceError::UnknownPath("missing".into()))
        );
    }

    #[test]
    fn location_is_fixed() {
        let a = get_location(true, 37.87, -122.26).unwrap();
        let b = get_location(true, 37.87, -122.26).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, (37.87, -122.26));
    }

    #[test]
    fn messaging_errors() {
        let mut hub = MessagingHub::new(vec!["a".into(), "b".into()]);
        assert_eq!(hub.messaging_send(true, "c"), Err(ServiceError::NoSuchModule("c".into())));
        assert_eq!(hub.messaging_send(true, "b"), Err(ServiceError::NoSubscriber("b".into())));
        hub.messaging_subscribe(1);
        assert_eq!(hub.messaging_send(true, "b"), Ok(1));
    }

    #[test]
    fn gps_windows_merge_and_split_energy() {
        let mut gps = GpsTracker::new(40.0);
        assert!(gps.request(0, 100.0).is_none());
        assert!(gps.is_tracking());
        // A request inside the warm-up window joins it without shortening it.
        assert!(gps.request(1, 110.0).is_none());
        // Far-future request closes the old window: [100, 131].
        let closed = gps.request(0, 1_000.0).expect("previous window closed");
        assert_eq!(closed.requests, vec![0, 1]);
        assert_abs_diff_eq!(closed.duration_s, GPS_WARMUP_S + GPS_HOLD_S, epsilon = 1e-9);
        assert_abs_diff_eq!(closed.energy_mwh, 40.0 * 31.0 / 3600.0, epsilon = 1e-12);
        let last = gps.finish().unwrap();
        assert_eq!(last.requests, vec![0]);
        assert!(!gps.is_tracking());
    }

    #[test]
    fn gps_expire_closes_idle_window() {
        let mut gps = GpsTracker::new(40.0);
        gps.request(2, 0.0);
        assert!(gps.expire(10.0).is_none(), "window still open");
        let closed = gps.expire(32.0).unwrap();
        assert_eq!(closed.requests, vec![2]);
        assert!(!gps.is_tracking());
    }
}
