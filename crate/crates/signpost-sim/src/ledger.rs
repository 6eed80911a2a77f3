//! Battery, charging/regulation chain, platform tax, and per-application
//! virtual energy allocations.
//!
//! Stored energy is split into one virtual allocation per application plus
//! an unallocated battery reserve, so `sum(balances) <= stored` holds by
//! construction. An allocation only decreases through the application's own
//! attributed draw or the platform tax; harvested energy is waterfilled
//! across the allocations that are below their maximum capacity. Depleted
//! applications are gated off and re-enabled with hysteresis once their
//! allocation recovers.

use serde::{Deserialize, Serialize};

/// Where the static platform draw is debited each interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxPolicy {
    /// Split equally across all virtual allocations (default).
    Allocations,
    /// Taken from the unallocated battery reserve only.
    Battery,
}

/// Battery and conversion-chain parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyChainConfig {
    pub battery_capacity_mwh: f64,
    pub charge_efficiency: f64,
    pub regulator_efficiency: f64,
    /// Static platform overhead (regulation, monitoring, isolation,
    /// controllers), debited per the tax policy.
    pub static_power_mw: f64,
    pub tax_policy: TaxPolicy,
    /// Default per-application allocation cap.
    pub allocation_capacity_mwh: f64,
    /// Re-enable hysteresis as a fraction of the allocation cap.
    pub reenable_fraction: f64,
    /// Energy initially left unallocated in the battery.
    pub initial_reserve_mwh: f64,
}

impl Default for EnergyChainConfig {
    fn default() -> Self {
        EnergyChainConfig {
            battery_capacity_mwh: 100_000.0,
            charge_efficiency: 0.85,
            regulator_efficiency: 0.89,
            static_power_mw: 16.0,
            tax_policy: TaxPolicy::Allocations,
            allocation_capacity_mwh: 10_000.0,
            reenable_fraction: 0.01,
            initial_reserve_mwh: 20_000.0,
        }
    }
}

impl EnergyChainConfig {
    /// Combined charging and regulation efficiency (~0.76 at the defaults).
    pub fn chain_efficiency(&self) -> f64 {
        self.charge_efficiency * self.regulator_efficiency
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("charge_efficiency", self.charge_efficiency),
            ("regulator_efficiency", self.regulator_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if !(self.battery_capacity_mwh > 0.0) {
            return Err("battery_capacity_mwh must be > 0".into());
        }
        if self.static_power_mw < 0.0 {
            return Err("static_power_mw must be >= 0".into());
        }
        if !(self.allocation_capacity_mwh > 0.0) {
            return Err("allocation_capacity_mwh must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.reenable_fraction) {
            return Err("reenable_fraction must be in [0, 1]".into());
        }
        if self.initial_reserve_mwh < 0.0 {
            return Err("initial_reserve_mwh must be >= 0".into());
        }
        Ok(())
    }
}

/// Attribution categories for per-application energy, mirroring the trace
/// breakdown (module rail draw vs. shared-service usage).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyCategory {
    Sensing,
    Comm,
    Processing,
    TimeLocation,
    Storage,
}

impl EnergyCategory {
    pub const ALL: [EnergyCategory; 5] = [
        EnergyCategory::Sensing,
        EnergyCategory::Comm,
        EnergyCategory::Processing,
        EnergyCategory::TimeLocation,
        EnergyCategory::Storage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnergyCategory::Sensing => "sensing",
            EnergyCategory::Comm => "comm",
            EnergyCategory::Processing => "processing",
            EnergyCategory::TimeLocation => "time_location",
            EnergyCategory::Storage => "storage",
        }
    }

    fn index(self) -> usize {
        match self {
            EnergyCategory::Sensing => 0,
            EnergyCategory::Comm => 1,
            EnergyCategory::Processing => 2,
            EnergyCategory::TimeLocation => 3,
            EnergyCategory::Storage => 4,
        }
    }
}

/// One application's isolated energy account.
#[derive(Debug, Clone)]
pub struct VirtualAllocation {
    pub app_id: String,
    pub balance_mwh: f64,
    pub max_capacity_mwh: f64,
    pub enabled: bool,
    /// Rail-level draw attributed over the last step, mW.
    pub attributed_draw_mw: f64,
}

impl VirtualAllocation {
    pub fn new(app_id: impl Into<String>, balance_mwh: f64, max_capacity_mwh: f64) -> Self {
        let balance = balance_mwh.clamp(0.0, max_capacity_mwh);
        VirtualAllocation {
            app_id: app_id.into(),
            balance_mwh: balance,
            max_capacity_mwh,
            enabled: balance > 0.0,
            attributed_draw_mw: 0.0,
        }
    }

    fn headroom(&self) -> f64 {
        (self.max_capacity_mwh - self.balance_mwh).max(0.0)
    }
}

/// Battery snapshot after a step.
#[derive(Debug, Clone, Copy)]
pub struct BatteryState {
    pub stored_mwh: f64,
    /// Net power into the battery over the last step, mW.
    pub net_power_in_mw: f64,
}

/// A gating transition produced by a step or a service debit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateTransition {
    pub app: usize,
    pub enabled: bool,
}

/// End-of-run conservation audit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyAudit {
    /// Harvested energy after charge efficiency, mWh.
    pub total_in_mwh: f64,
    pub delta_stored_mwh: f64,
    /// Battery-side drain attributed to applications (rail / regulator
    /// efficiency), mWh.
    pub attributed_drain_mwh: f64,
    pub tax_paid_mwh: f64,
    /// Harvest discarded because the battery or all allocations were full.
    pub curtailed_mwh: f64,
    /// Tax that could not be collected from an empty battery.
    pub tax_shortfall_mwh: f64,
    /// |in - (delta + drain + tax + curtailed)| / max(|in|, 1).
    pub relative_error: f64,
}

/// Waterfill `incoming_mwh` across allocations below their caps: equal
/// shares, with any share beyond an allocation's headroom re-split among the
/// rest. Returns the residual energy no allocation could absorb.
pub fn distribute_harvest(incoming_mwh: f64, allocations: &mut [VirtualAllocation]) -> f64 {
    assert!(incoming_mwh >= 0.0);
    let mut remaining = incoming_mwh;
    loop {
        let active: Vec<usize> = (0..allocations.len())
            .filter(|&i| allocations[i].headroom() > 1e-12)
            .collect();
        if active.is_empty() || remaining <= 1e-15 {
            break;
        }
        let share = remaining / active.len() as f64;
        let mut capped_any = false;
        for i in active {
            let take = share.min(allocations[i].headroom());
            allocations[i].balance_mwh += take;
            remaining -= take;
            if take < share {
                capped_any = true;
            }
        }
        if !capped_any {
            remaining = 0.0;
            break;
        }
    }
    remaining.max(0.0)
}

/// Gate or re-enable one allocation based on its balance, with hysteresis.
/// Returns the new state on a transition.
pub fn gate_module(
    allocation: &mut VirtualAllocation,
    reenable_threshold_mwh: f64,
) -> Option<bool> {
    if allocation.enabled && allocation.balance_mwh <= 0.0 {
        allocation.enabled = false;
        Some(false)
    } else if !allocation.enabled && allocation.balance_mwh >= reenable_threshold_mwh {
        allocation.enabled = true;
        Some(true)
    } else {
        None
    }
}

/// Average power budget (mW) of a battery-only platform over a lifetime.
pub fn battery_only_budget(storage_mwh: f64, lifetime_h: f64) -> f64 {
    assert!(lifetime_h > 0.0, "lifetime must be > 0");
    storage_mwh / lifetime_h
}

/// The platform energy ledger: battery, reserve, and virtual allocations.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    config: EnergyChainConfig,
    allocations: Vec<VirtualAllocation>,
    reserve_mwh: f64,
    initial_stored_mwh: f64,
    last_net_in_mw: f64,
    // Audit counters.
    total_in_mwh: f64,
    drain_mwh: Vec<f64>,
    tax_paid_mwh: f64,
    curtailed_mwh: f64,
    tax_shortfall_mwh: f64,
    // Rail-level attribution per app and category, cumulative.
    attributed_rail_mwh: Vec<[f64; 5]>,
}

impl EnergyLedger {
    /// `apps`: `(app_id, initial_balance_mwh, max_capacity_mwh)` per slot.
    pub fn new(config: EnergyChainConfig, apps: &[(String, f64, f64)]) -> Self {
        let allocations: Vec<VirtualAllocation> = apps
            .iter()
            .map(|(id, bal, cap)| VirtualAllocation::new(id.clone(), *bal, *cap))
            .collect();
        let stored: f64 =
            config.initial_reserve_mwh + allocations.iter().map(|a| a.balance_mwh).sum::<f64>();
        assert!(
            stored <= config.battery_capacity_mwh + 1e-9,
            "initial balances plus reserve exceed battery capacity"
        );
        let n = allocations.len();
        EnergyLedger {
            config,
            allocations,
            reserve_mwh: config.initial_reserve_mwh,
            initial_stored_mwh: stored,
            last_net_in_mw: 0.0,
            total_in_mwh: 0.0,
            drain_mwh: vec![0.0; n],
            tax_paid_mwh: 0.0,
            curtailed_mwh: 0.0,
            tax_shortfall_mwh: 0.0,
            attributed_rail_mwh: vec![[0.0; 5]; n],
        }
    }

    pub fn config(&self) -> &EnergyChainConfig {
        &self.config
    }

    pub fn allocations(&self) -> &[VirtualAllocation] {
        &self.allocations
    }

    pub fn stored_mwh(&self) -> f64 {
        self.reserve_mwh + self.allocations.iter().map(|a| a.balance_mwh).sum::<f64>()
    }

    pub fn reserve_mwh(&self) -> f64 {
        self.reserve_mwh
    }

    pub fn battery_state(&self) -> BatteryState {
        BatteryState { stored_mwh: self.stored_mwh(), net_power_in_mw: self.last_net_in_mw }
    }

    pub fn is_enabled(&self, app: usize) -> bool {
        self.allocations[app].enabled
    }

    fn reenable_threshold(&self, app: usize) -> f64 {
        self.config.reenable_fraction * self.allocations[app].max_capacity_mwh
    }

    /// Cumulative rail-level attribution for one app, by category (mWh).
    pub fn attributed_by_category(&self, app: usize) -> [f64; 5] {
        self.attributed_rail_mwh[app]
    }

    /// Debit service energy measured at the module rail (mWh) to an app.
    /// The allocation pays `rail / regulator_efficiency`, limited by its
    /// balance. Returns a gating transition if the balance hit zero.
    pub fn service_debit(
        &mut self,
        app: usize,
        rail_mwh: f64,
        category: EnergyCategory,
    ) -> Option<GateTransition> {
        assert!(rail_mwh >= 0.0);
        let alloc = &mut self.allocations[app];
        if !alloc.enabled || rail_mwh == 0.0 {
            return None;
        }
        let want = rail_mwh / self.config.regulator_efficiency;
        let drain = want.min(alloc.balance_mwh);
        alloc.balance_mwh -= drain;
        self.drain_mwh[app] += drain;
        self.attributed_rail_mwh[app][category.index()] +=
            drain * self.config.regulator_efficiency;
        gate_module(&mut self.allocations[app], 0.0)
            .map(|enabled| GateTransition { app, enabled })
    }

    /// Advance the accounting by one interval.
    ///
    /// The battery gains `harvest x charge_efficiency x dt` (waterfilled into
    /// allocations below cap, residual to the reserve, overflow curtailed);
    /// each enabled app's allocation pays `draw / regulator_efficiency x dt`;
    /// the static platform power is debited per the tax policy. Depletion is
    /// handled by gating, never by error.
    pub fn step_accounting(
        &mut self,
        interval_s: f64,
        harvest_power_mw: f64,
        per_app_draw_mw: &[f64],
    ) -> (BatteryState, Vec<GateTransition>) {
        assert!(interval_s > 0.0);
        assert_eq!(per_app_draw_mw.len(), self.allocations.len());
        let dt_h = interval_s / 3600.0;
        let mut transitions = Vec::new();

        // Attributed draws, battery side.
        let mut drained = 0.0;
        for (i, &draw) in per_app_draw_mw.iter().enumerate() {
            debug_assert!(draw >= 0.0);
            let alloc = &mut self.allocations[i];
            // A disabled app draws nothing no matter what is reported.
            let draw = if alloc.enabled { draw.max(0.0) } else { 0.0 };
            let want = draw / self.config.regulator_efficiency * dt_h;
            let drain = want.min(alloc.balance_mwh);
            alloc.balance_mwh -= drain;
            alloc.attributed_draw_mw = if dt_h > 0.0 { drain * self.config.regulator_efficiency / dt_h } else { 0.0 };
            self.drain_mwh[i] += drain;
            self.attributed_rail_mwh[i][EnergyCategory::Sensing.index()] +=
                drain * self.config.regulator_efficiency;
            drained += drain;
        }

        // Platform tax.
        let tax_due = self.config.static_power_mw * dt_h;
        let mut tax_paid = 0.0;
        match self.config.tax_policy {
            TaxPolicy::Allocations if !self.allocations.is_empty() => {
                let share = tax_due / self.allocations.len() as f64;
                let mut unpaid = 0.0;
                for alloc in &mut self.allocations {
                    let take = share.min(alloc.balance_mwh);
                    alloc.balance_mwh -= take;
                    tax_paid += take;
                    unpaid += share - take;
                }
                let from_reserve = unpaid.min(self.reserve_mwh);
                self.reserve_mwh -= from_reserve;
                tax_paid += from_reserve;
            }
            _ => {
                let from_reserve = tax_due.min(self.reserve_mwh);
                self.reserve_mwh -= from_reserve;
                tax_paid = from_reserve;
            }
        }
        self.tax_paid_mwh += tax_paid;
        self.tax_shortfall_mwh += tax_due - tax_paid;

        // Harvest intake and distribution.
        debug_assert!(harvest_power_mw >= 0.0);
        let incoming = harvest_power_mw.max(0.0) * self.config.charge_efficiency * dt_h;
        self.total_in_mwh += incoming;
        let residual = distribute_harvest(incoming, &mut self.allocations);
        let room = (self.config.battery_capacity_mwh - self.stored_mwh()).max(0.0);
        let to_reserve = residual.min(room);
        self.reserve_mwh += to_reserve;
        self.curtailed_mwh += residual - to_reserve;
        let absorbed = incoming - (residual - to_reserve);

        // Gating with hysteresis.
        for i in 0..self.allocations.len() {
            let threshold = self.reenable_threshold(i);
            if let Some(enabled) = gate_module(&mut self.allocations[i], threshold) {
                transitions.push(GateTransition { app: i, enabled });
            }
        }

        self.last_net_in_mw = (absorbed - drained - tax_paid) / dt_h;
        (self.battery_state(), transitions)
    }

    /// Evaluate the conservation identity over everything accounted so far.
    pub fn audit(&self) -> EnergyAudit {
        let delta = self.stored_mwh() - self.initial_stored_mwh;
        let drain: f64 = self.drain_mwh.iter().sum();
        let rhs = delta + drain + self.tax_paid_mwh + self.curtailed_mwh;
        let err = (self.total_in_mwh - rhs).abs() / self.total_in_mwh.abs().max(1.0);
        EnergyAudit {
            total_in_mwh: self.total_in_mwh,
            delta_stored_mwh: delta,
            attributed_drain_mwh: drain,
            tax_paid_mwh: self.tax_paid_mwh,
            curtailed_mwh: self.curtailed_mwh,
            tax_shortfall_mwh: self.tax_shortfall_mwh,
            relative_error: err,
        }
    }
}
