//! The weekly budget pipeline end to end: synthetic irradiance for eight
//! weeks, panel power, weekly averages, the per-application budget formula
//! (subtract 16 mW static, divide by five tenants, apply the 76% chain),
//! and the resulting CCDF.
//!
//! ```bash
//! cargo run --example budget_ccdf
//! ```

use signpost_sim::io::parse_timestamp;
use signpost_sim::solar::{
    harvest_trace, per_app_budget, synthetic_clear_sky, weekly_averages, weekly_ccdf, PanelConfig,
};

fn main() {
    let (lat, lon) = (37.87, -122.26);
    let start = parse_timestamp("2017-02-01T00:00:00Z").unwrap();
    // Eight clear weeks; cloud cover emulated by scaling alternate weeks.
    let mut records = synthetic_clear_sky(start, 8 * 7 * 24, lat, lon);
    for (i, r) in records.iter_mut().enumerate() {
        let week = i / (7 * 24);
        let cloud = [1.0, 0.45, 0.8, 0.3, 1.0, 0.6, 0.9, 0.5][week];
        r.dni_wm2 *= cloud;
        r.dhi_wm2 *= 0.5 + 0.5 * cloud;
    }

    let panel =
        PanelConfig { latitude_deg: lat, longitude_deg: lon, ..PanelConfig::default() };
    let trace = harvest_trace(&records, &panel);

    let (static_mw, n_apps, chain_eff) = (16.0, 5, 0.76);
    println!("weekly harvest averages and per-app budgets (south-facing vertical panel):");
    for (i, avg) in weekly_averages(&trace).unwrap().iter().enumerate() {
        let budget = per_app_budget(*avg, static_mw, n_apps, chain_eff);
        println!("  week {}: harvest {avg:7.1} mW -> budget {budget:7.2} mW per app", i + 1);
    }

    let dist = weekly_ccdf(&trace, static_mw, n_apps, chain_eff).unwrap();
    println!();
    println!("CCDF - fraction of weeks an application can count on at least X mW:");
    for &(budget, fraction) in dist.points() {
        let bar = "#".repeat((fraction * 40.0).round() as usize);
        println!("  >= {budget:7.2} mW  {:5.1}%  {bar}", fraction * 100.0);
    }
    println!();
    println!(
        "95% level: {:.2} mW; median level: {:.2} mW",
        dist.budget_at_fraction(0.95),
        dist.budget_at_fraction(0.5)
    );
}
