//! Shared inter-module bus contention, modeled as unslotted ALOHA.
//!
//! Without carrier sense, a transmission survives only if no other packet
//! starts within its two-packet-time vulnerable window, giving the classic
//! `e^(-2G)` success probability at offered load `G`. Collided messages are
//! retried after a randomized backoff until delivered. Offered load is
//! tracked over a sliding one-second window of recent traffic.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    pub raw_rate_bps: f64,
    /// Operating point the platform aims to stay under.
    pub target_utilization: f64,
    /// Idealized listen-before-talk: every transfer succeeds first try.
    pub carrier_sense: bool,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig { raw_rate_bps: 400_000.0, target_utilization: 0.20, carrier_sense: false }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.raw_rate_bps > 0.0) {
            return Err("raw_rate_bps must be > 0".into());
        }
        if !(self.target_utilization > 0.0 && self.target_utilization <= 1.0) {
            return Err("target_utilization must be in (0, 1]".into());
        }
        Ok(())
    }
}

/// Backoff after a collision, uniform in [1, 32] message durations.
const BACKOFF_MIN_SLOTS: u32 = 1;
const BACKOFF_MAX_SLOTS: u32 = 32;

/// First-attempt success probability at normalized offered load `g`.
pub fn success_probability(cfg: &BusConfig, g: f64) -> f64 {
    debug_assert!(g >= 0.0);
    if cfg.carrier_sense {
        1.0
    } else {
        (-2.0 * g).exp()
    }
}

/// Outcome of a completed transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    /// Time from first attempt to successful delivery, seconds.
    pub latency_s: f64,
    pub attempts: u32,
}

/// Attempt a transfer at the given offered load, retrying with randomized
/// backoff until delivered (or `max_attempts` is exhausted, for measurement
/// runs that only care about the first attempt).
pub fn transfer<R: Rng>(
    msg_bits: u64,
    offered_load: f64,
    cfg: &BusConfig,
    rng: &mut R,
    max_attempts: Option<u32>,
) -> Option<Transfer> {
    assert!(msg_bits > 0);
    let tx_time = msg_bits as f64 / cfg.raw_rate_bps;
    let p = success_probability(cfg, offered_load);
    let mut latency = 0.0;
    let mut attempts = 0;
    loop {
        attempts += 1;
        latency += tx_time;
        if p >= 1.0 || rng.gen_bool(p) {
            return Some(Transfer { latency_s: latency, attempts });
        }
        if let Some(max) = max_attempts {
            if attempts >= max {
                return None;
            }
        }
        let slots = rng.gen_range(BACKOFF_MIN_SLOTS..=BACKOFF_MAX_SLOTS);
        latency += slots as f64 * tx_time;
    }
}

/// Sliding-window load tracker for the live bus.
#[derive(Debug, Clone)]
pub struct BusState {
    cfg: BusConfig,
    window: VecDeque<(f64, u64)>,
    window_bits: u64,
}

/// Width of the offered-load window, seconds.
const LOAD_WINDOW_S: f64 = 1.0;

impl BusState {
    pub fn new(cfg: BusConfig) -> Self {
        BusState { cfg, window: VecDeque::new(), window_bits: 0 }
    }

    pub fn config(&self) -> &BusConfig {
        &self.cfg
    }

    fn expire(&mut self, now_s: f64) {
        while let Some(&(t, bits)) = self.window.front() {
            if now_s - t > LOAD_WINDOW_S {
                self.window.pop_front();
                self.window_bits -= bits;
            } else {
                break;
            }
        }
    }

    /// Offered load over the last second, normalized to raw capacity.
    pub fn offered_load(&mut self, now_s: f64) -> f64 {
        self.expire(now_s);
        self.window_bits as f64 / (self.cfg.raw_rate_bps * LOAD_WINDOW_S)
    }

    /// Send a message at `now_s`, accounting its traffic (including retries)
    /// in the load window.
    pub fn send<R: Rng>(&mut self, now_s: f64, msg_bits: u64, rng: &mut R) -> Transfer {
        let g = self.offered_load(now_s);
        let outcome = transfer(msg_bits, g, &self.cfg, rng, None)
            .expect("unbounded retries always deliver");
        self.window.push_back((now_s, msg_bits * u64::from(outcome.attempts)));
        self.window_bits += msg_bits * u64::from(outcome.attempts);
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn success_probability_examples() {
        let cfg = BusConfig::default();
        assert_eq!(success_probability(&cfg, 0.0), 1.0);
        assert_abs_diff_eq!(success_probability(&cfg, 0.5), (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(success_probability(&cfg, 0.2), (-0.4f64).exp(), epsilon = 1e-12);
        let cs = BusConfig { carrier_sense: true, ..cfg };
        assert_eq!(success_probability(&cs, 3.0), 1.0);
    }

    #[test]
    fn throughput_peaks_at_half_load() {
        let cfg = BusConfig::default();
        let s = |g: f64| g * success_probability(&cfg, g);
        assert_abs_diff_eq!(s(0.5), 0.18394, epsilon = 1e-4);
        for g in [0.1, 0.3, 0.45, 0.55, 0.7, 1.0] {
            assert!(s(g) < s(0.5), "throughput at {g} should be below the peak");
        }
    }

    #[test]
    fn success_probability_strictly_decreasing() {
        let cfg = BusConfig::default();
        let mut prev = success_probability(&cfg, 0.0);
        for i in 1..100 {
            let g = i as f64 * 0.05;
            let p = success_probability(&cfg, g);
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn carrier_sense_transfer_is_pure_transmission_time() {
        let cfg = BusConfig { carrier_sense: true, ..Default::default() };
        let mut rng = crate::rng::stream(5, "bus-test");
        let t = transfer(1000, 0.9, &cfg, &mut rng, None).unwrap();
        assert_eq!(t.attempts, 1);
        assert_abs_diff_eq!(t.latency_s, 0.0025, epsilon = 1e-12);
    }

    #[test]
    fn empty_bus_latency_is_transmission_time() {
        let cfg = BusConfig::default();
        let mut rng = crate::rng::stream(5, "bus-test");
        let t = transfer(1000, 0.0, &cfg, &mut rng, None).unwrap();
        assert_eq!(t.attempts, 1);
        assert_abs_diff_eq!(t.latency_s, 0.0025, epsilon = 1e-12);
    }

    #[test]
    fn first_attempt_ratio_matches_analytic_model() {
        let cfg = BusConfig::default();
        let n = 20_000u32;
        for (i, g) in [0.1, 0.2, 0.5].into_iter().enumerate() {
            let mut rng = crate::rng::stream(100 + i as u64, "bus-ratio");
            let delivered = (0..n)
                .filter(|_| transfer(800, g, &cfg, &mut rng, Some(1)).is_some())
                .count();
            let p = (-2.0 * g).exp();
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let ratio = delivered as f64 / n as f64;
            assert!(
                (ratio - p).abs() < 3.0 * sigma,
                "G={g}: ratio {ratio} vs p {p} (3 sigma {:.5})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn mean_latency_nondecreasing_in_load() {
        let cfg = BusConfig::default();
        let mut means = Vec::new();
        for (i, g) in [0.05, 0.2, 0.5, 0.9].into_iter().enumerate() {
            let mut rng = crate::rng::stream(7 + i as u64, "bus-latency");
            let total: f64 = (0..5_000)
                .map(|_| transfer(800, g, &cfg, &mut rng, None).unwrap().latency_s)
                .sum();
            means.push(total / 5_000.0);
        }
        for pair in means.windows(2) {
            assert!(pair[1] >= pair[0], "latency means {means:?} not monotone");
        }
    }

    #[test]
    fn sliding_window_tracks_offered_load() {
        let mut bus = BusState::new(BusConfig { carrier_sense: true, ..Default::default() });
        let mut rng = crate::rng::stream(3, "bus-window");
        assert_eq!(bus.offered_load(0.0), 0.0);
        bus.send(0.0, 40_000, &mut rng);
        assert_abs_diff_eq!(bus.offered_load(0.5), 0.1, epsilon = 1e-12);
        bus.send(0.5, 40_000, &mut rng);
        assert_abs_diff_eq!(bus.offered_load(0.9), 0.2, epsilon = 1e-12);
        // First message ages out of the window.
        assert_abs_diff_eq!(bus.offered_load(1.2), 0.1, epsilon = 1e-12);
    }
}
