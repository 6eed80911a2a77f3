//! The shared Radio Module: three radio links with distinct power and
//! throughput characteristics, one outbound FIFO queue, and the escalation
//! policy that activates the cellular radio when the queue fills.
//!
//! Messages normally leave over LoRaWAN at periodic transmit opportunities.
//! When delivery stalls (or applications outpace the link) and the queue
//! reaches the policy threshold, a cellular session is opened and the whole
//! queue is transferred. Session energy is split across the flushed messages
//! proportional to payload bytes and attributed to their applications. BLE
//! carries a last-writer-wins advertisement for nearby receivers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

pub const MWH_PER_MW_S: f64 = 1.0 / 3600.0;

/// Largest BLE advertisement payload, bytes.
pub const BLE_ADV_MAX_BYTES: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadioKind {
    Lorawan,
    Cellular,
    Ble,
}

/// One radio medium.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioLink {
    pub active_power_mw: f64,
    pub sleep_power_mw: f64,
    pub throughput_bps: f64,
    pub delivery_probability: f64,
}

impl RadioLink {
    pub fn lorawan_default() -> Self {
        RadioLink {
            active_power_mw: 500.0,
            sleep_power_mw: 0.5,
            throughput_bps: 5_000.0,
            delivery_probability: 1.0,
        }
    }

    pub fn cellular_default() -> Self {
        RadioLink {
            active_power_mw: 2_500.0,
            sleep_power_mw: 0.5,
            throughput_bps: 7_200_000.0,
            delivery_probability: 1.0,
        }
    }

    pub fn ble_default() -> Self {
        RadioLink {
            active_power_mw: 50.0,
            sleep_power_mw: 0.1,
            throughput_bps: 1_000_000.0,
            delivery_probability: 1.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), String> {
        if !(self.throughput_bps > 0.0) {
            return Err(format!("{name}.throughput_bps must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.delivery_probability) {
            return Err(format!("{name}.delivery_probability must be in [0, 1]"));
        }
        if self.active_power_mw < 0.0 || self.sleep_power_mw < 0.0 {
            return Err(format!("{name} powers must be >= 0"));
        }
        Ok(())
    }
}

impl Default for RadioLink {
    fn default() -> Self {
        RadioLink::lorawan_default()
    }
}

/// Queue-threshold escalation policy and radio scheduling knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommPolicy {
    /// Queue length that triggers a cellular flush.
    pub queue_threshold: usize,
    /// Hard queue cap; beyond it enqueue fails (application misbehavior).
    pub queue_hard_cap: usize,
    /// Cellular connection/registration window at active power, per flush.
    pub session_overhead_s: f64,
    /// Spacing of LoRaWAN transmit opportunities.
    pub lora_retry_interval_s: f64,
    /// BLE advertising cadence and on-air time per advertisement.
    pub ble_adv_interval_s: f64,
    pub ble_adv_duration_s: f64,
}

impl Default for CommPolicy {
    fn default() -> Self {
        CommPolicy {
            queue_threshold: 20,
            queue_hard_cap: 1000,
            session_overhead_s: 10.0,
            lora_retry_interval_s: 10.0,
            ble_adv_interval_s: 1.0,
            ble_adv_duration_s: 0.005,
        }
    }
}

impl CommPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.queue_threshold < 1 {
            return Err("queue_threshold must be >= 1".into());
        }
        if self.queue_hard_cap < self.queue_threshold {
            return Err("queue_hard_cap must be >= queue_threshold".into());
        }
        if !(self.lora_retry_interval_s > 0.0) {
            return Err("lora_retry_interval_s must be > 0".into());
        }
        if self.session_overhead_s < 0.0 {
            return Err("session_overhead_s must be >= 0".into());
        }
        Ok(())
    }
}

/// A queued outbound payload.
#[derive(Debug, Clone)]
pub struct OutboundMessage {
    pub app: usize,
    pub payload_len: usize,
    pub enqueue_time_s: f64,
    pub destination: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum CommError {
    #[error("outbound queue full ({0} messages)")]
    QueueFull(usize),
    #[error("BLE advertisement payload too large: {0} > {BLE_ADV_MAX_BYTES} bytes")]
    PayloadTooLarge(usize),
}

/// Result of one LoRaWAN attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoraAttempt {
    pub delivered: bool,
    pub airtime_s: f64,
    /// Transmit energy charged to the sending app (spent on failures too;
    /// the radio transmits whether or not anyone hears it).
    pub energy_mwh: f64,
}

/// Attempt one message over LoRaWAN.
pub fn attempt_lorawan<R: Rng>(payload_len: usize, link: &RadioLink, rng: &mut R) -> LoraAttempt {
    debug_assert!(payload_len > 0);
    let airtime_s = (payload_len as f64 * 8.0) / link.throughput_bps;
    let delivered = link.delivery_probability >= 1.0
        || (link.delivery_probability > 0.0 && rng.gen_bool(link.delivery_probability));
    LoraAttempt {
        delivered,
        airtime_s,
        energy_mwh: link.active_power_mw * airtime_s * MWH_PER_MW_S,
    }
}

/// One LoRaWAN try at a transmit opportunity.
#[derive(Debug, Clone, Copy)]
pub struct LoraEvent {
    pub app: usize,
    pub payload_len: usize,
    pub attempt: LoraAttempt,
    pub queue_len_after: usize,
}

/// One message delivered by a cellular flush.
#[derive(Debug, Clone)]
pub struct FlushDelivery {
    pub app: usize,
    pub payload_len: usize,
    pub energy_share_mwh: f64,
}

/// Outcome of a cellular flush session.
#[derive(Debug, Clone)]
pub struct FlushResult {
    pub deliveries: Vec<FlushDelivery>,
    pub total_energy_mwh: f64,
    pub session_s: f64,
}

/// Current power state of a radio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioState {
    Sleep,
    Active,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CommStats {
    pub enqueued: u64,
    pub delivered_lora: u64,
    pub failed_lora: u64,
    pub delivered_cellular: u64,
    pub flush_count: u64,
    pub ble_advertisements: u64,
}

/// Deterministic state machine for the Radio Module.
#[derive(Debug, Clone)]
pub struct CommEngine {
    policy: CommPolicy,
    lorawan: RadioLink,
    cellular: RadioLink,
    ble: RadioLink,
    queue: VecDeque<OutboundMessage>,
    flush_pending: bool,
    cellular_busy_until: f64,
    advertisement: Option<(usize, Vec<u8>)>,
    stats: CommStats,
}

/// What the caller should schedule after an enqueue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnqueueOutcome {
    pub queue_len: usize,
    /// A cellular flush crossed the threshold and needs scheduling.
    pub schedule_flush: bool,
}

impl CommEngine {
    pub fn new(policy: CommPolicy, lorawan: RadioLink, cellular: RadioLink, ble: RadioLink) -> Self {
        CommEngine {
            policy,
            lorawan,
            cellular,
            ble,
            queue: VecDeque::new(),
            flush_pending: false,
            cellular_busy_until: f64::NEG_INFINITY,
            advertisement: None,
            stats: CommStats::default(),
        }
    }

    pub fn policy(&self) -> &CommPolicy {
        &self.policy
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> CommStats {
        self.stats
    }

    pub fn link(&self, kind: RadioKind) -> &RadioLink {
        match kind {
            RadioKind::Lorawan => &self.lorawan,
            RadioKind::Cellular => &self.cellular,
            RadioKind::Ble => &self.ble,
        }
    }

    /// Radio power state at a given time. LoRa attempts and BLE
    /// advertisements are modeled as instantaneous energy events, so only
    /// the cellular session holds a radio in the active state.
    pub fn radio_state(&self, kind: RadioKind, now_s: f64) -> RadioState {
        match kind {
            RadioKind::Cellular if now_s < self.cellular_busy_until => RadioState::Active,
            _ => RadioState::Sleep,
        }
    }

    /// Append a message FIFO. Crossing the queue threshold requests a
    /// cellular flush (at most one outstanding at a time).
    pub fn enqueue(&mut self, msg: OutboundMessage) -> Result<EnqueueOutcome, CommError> {
        debug_assert!(msg.payload_len > 0, "payload_len must be > 0");
        if self.queue.len() >= self.policy.queue_hard_cap {
            return Err(CommError::QueueFull(self.queue.len()));
        }
        self.queue.push_back(msg);
        self.stats.enqueued += 1;
        let schedule_flush = self.queue.len() >= self.policy.queue_threshold && !self.flush_pending;
        if schedule_flush {
            self.flush_pending = true;
        }
        Ok(EnqueueOutcome { queue_len: self.queue.len(), schedule_flush })
    }

    /// One LoRaWAN transmit opportunity: send head-of-queue messages until a
    /// failure blocks the FIFO, the opportunity's airtime budget is spent,
    /// or the queue empties.
    pub fn lora_opportunity<R: Rng>(&mut self, rng: &mut R) -> Vec<LoraEvent> {
        let mut out = Vec::new();
        if self.flush_pending {
            return out; // cellular will take the queue
        }
        let budget = self.policy.lora_retry_interval_s;
        let mut spent = 0.0;
        while let Some(head) = self.queue.front() {
            let (app, len) = (head.app, head.payload_len);
            let attempt = attempt_lorawan(len, &self.lorawan, rng);
            if spent + attempt.airtime_s > budget && !out.is_empty() {
                break;
            }
            spent += attempt.airtime_s;
            if attempt.delivered {
                self.queue.pop_front();
                self.stats.delivered_lora += 1;
            } else {
                self.stats.failed_lora += 1;
            }
            out.push(LoraEvent {
                app,
                payload_len: len,
                attempt,
                queue_len_after: self.queue.len(),
            });
            if !attempt.delivered || spent >= budget {
                break;
            }
        }
        out
    }

    /// Open a cellular session and deliver the entire queue. Session energy
    /// (connection overhead plus transfer time at active power) is split
    /// across messages proportional to payload bytes.
    pub fn cellular_flush(&mut self, now_s: f64) -> FlushResult {
        self.flush_pending = false;
        let msgs: Vec<OutboundMessage> = self.queue.drain(..).collect();
        let total_bytes: usize = msgs.iter().map(|m| m.payload_len).sum();
        let transfer_s = total_bytes as f64 * 8.0 / self.cellular.throughput_bps;
        let session_s = self.policy.session_overhead_s + transfer_s;
        let total_energy_mwh = self.cellular.active_power_mw * session_s * MWH_PER_MW_S;
        let deliveries = msgs
            .iter()
            .map(|m| FlushDelivery {
                app: m.app,
                payload_len: m.payload_len,
                energy_share_mwh: if total_bytes > 0 {
                    total_energy_mwh * m.payload_len as f64 / total_bytes as f64
                } else {
                    0.0
                },
            })
            .collect();
        self.cellular_busy_until = now_s + session_s;
        self.stats.flush_count += 1;
        self.stats.delivered_cellular += msgs.len() as u64;
        FlushResult { deliveries, total_energy_mwh, session_s }
    }

    /// Set the current BLE advertisement (last writer wins).
    pub fn ble_advertise(&mut self, app: usize, payload: &[u8]) -> Result<(), CommError> {
        if payload.len() > BLE_ADV_MAX_BYTES {
            return Err(CommError::PayloadTooLarge(payload.len()));
        }
        self.advertisement = Some((app, payload.to_vec()));
        self.stats.ble_advertisements += 1;
        Ok(())
    }

    pub fn advertisement(&self) -> Option<(usize, &[u8])> {
        self.advertisement.as_ref().map(|(app, p)| (*app, p.as_slice()))
    }

    /// Advertising energy accrued over `interval_s`, charged to the owner of
    /// the current advertisement.
    pub fn ble_interval_energy(&self, interval_s: f64) -> Option<(usize, f64)> {
        let (app, _) = self.advertisement.as_ref()?;
        let duty = self.policy.ble_adv_duration_s / self.policy.ble_adv_interval_s;
        Some((*app, self.ble.active_power_mw * duty * interval_s * MWH_PER_MW_S))
    }
}
