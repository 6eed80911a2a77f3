//! The three-strategy energy isolation experiment: a duty-cycled app, a
//! greedy 250 mW app, and an adaptive app share one battery for 20 hours
//! with harvest arriving only in the afternoon. The greedy app exhausts its
//! virtual allocation and is gated off without disturbing the others, then
//! comes back once harvested energy is distributed again.
//!
//! ```bash
//! cargo run --example energy_isolation
//! ```

use signpost_sim::report::read_energy_trace;
use signpost_sim::scenario::Scenario;
use signpost_sim::sim::run;
use std::path::Path;

fn main() {
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/isolation_20h.json");
    let scenario = Scenario::load(&fixture).expect("fixture scenario loads");
    let out = std::env::temp_dir().join("signpost-sim-example-isolation");
    let summary = run(&scenario, &out).expect("simulation runs");
    let platform = &summary.platforms[0];

    println!("20 h run, harvest off until t=12 h, 2 W until t=18 h");
    println!();
    println!("allocation balances (mWh), sampled hourly:");
    println!("{:>6} {:>12} {:>12} {:>12}", "hour", "duty_cycled", "greedy", "adaptive");
    let rows = read_energy_trace(&out.join("energy.csv")).unwrap();
    for hour in (0..=20).map(|h| h as f64 * 3600.0) {
        let at = |app: &str| {
            rows.iter()
                .filter(|r| r.app_id == app && r.t <= hour.max(300.0))
                .next_back()
                .map_or(f64::NAN, |r| r.balance_mwh)
        };
        println!(
            "{:>6} {:>12.0} {:>12.0} {:>12.0}",
            hour / 3600.0,
            at("duty_cycled"),
            at("greedy"),
            at("adaptive")
        );
    }

    println!();
    for app in &platform.apps {
        let gating = if app.gating.is_empty() {
            "never gated".to_string()
        } else {
            app.gating
                .iter()
                .map(|g| match g.enabled_at_s {
                    Some(on) => format!(
                        "off {:.1} h, on again {:.1} h",
                        g.disabled_at_s / 3600.0,
                        on / 3600.0
                    ),
                    None => format!("off {:.1} h until end", g.disabled_at_s / 3600.0),
                })
                .collect::<Vec<_>>()
                .join("; ")
        };
        println!(
            "{:<12} avg {:7.2} mW, final balance {:8.1} mWh, {gating}",
            app.app_id, app.avg_power_mw, app.final_balance_mwh
        );
    }
    println!();
    let audit = &platform.audit;
    println!(
        "energy audit: {:.1} mWh in = {:.1} delta + {:.1} drained + {:.1} tax (rel err {:.1e})",
        audit.total_in_mwh,
        audit.delta_stored_mwh,
        audit.attributed_drain_mwh,
        audit.tax_paid_mwh,
        audit.relative_error
    );
    println!("traces written to {}", out.display());
}
