//! Acceptance suite: one test per platform-level claim, each printing a
//! PASS line with the measured value. Run with
//! `cargo test -p signpost-sim --test acceptance -- --nocapture` to see them.

use signpost_sim::bus::{success_probability, transfer, BusConfig};
use signpost_sim::comm::{CommEngine, CommPolicy, OutboundMessage, RadioKind, RadioLink, RadioState};
use signpost_sim::ledger::battery_only_budget;
use signpost_sim::ledger::EnergyChainConfig;
use signpost_sim::report::{read_comm_trace, read_energy_trace, EnergyRow};
use signpost_sim::rng;
use signpost_sim::scenario::Scenario;
use signpost_sim::services::{PpsClock, TimeSyncModel};
use signpost_sim::sim::{run, RunSummary};
use signpost_sim::solar::{per_app_budget, weekly_ccdf, PanelConfig};
use std::path::{Path, PathBuf};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run_fixture(name: &str) -> (RunSummary, tempfile::TempDir) {
    let scenario = Scenario::load(&fixture(name)).expect("fixture loads");
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&scenario, dir.path()).expect("run succeeds");
    (summary, dir)
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[test]
fn criterion_01_battery_only_budget() {
    let budget = battery_only_budget(576_000.0, 8760.0);
    assert!((budget - 66.0).abs() <= 0.5, "budget {budget} mW not within 66 +/- 0.5");
    assert!((budget - 65.75).abs() < 0.01);
    println!("acceptance 01 PASS - battery-only budget {budget:.2} mW (66 +/- 0.5 mW)");
}

#[test]
fn criterion_02_chain_efficiency_and_budget_formula() {
    let chain = EnergyChainConfig::default().chain_efficiency();
    assert!((chain - 0.76).abs() <= 0.005, "chain {chain} not within 0.76 +/- 0.005");
    assert!((chain - 0.7565).abs() < 1e-12);
    let budget = per_app_budget(1000.0, 16.0, 5, 0.76);
    assert!((budget - 149.568).abs() < 1e-9, "budget {budget}");
    println!(
        "acceptance 02 PASS - chain efficiency {chain:.4} (0.76 +/- 0.005), \
         1000 mW week -> {budget:.3} mW per app"
    );
}

fn rows_for<'a>(rows: &'a [EnergyRow], app: &str) -> Vec<&'a EnergyRow> {
    rows.iter().filter(|r| r.app_id == app).collect()
}

#[test]
fn criterion_03_energy_isolation_scenario() {
    let started = std::time::Instant::now();
    let (summary, dir) = run_fixture("isolation_20h.json");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "20 h run took {elapsed:?}, budget is 10 s");

    let platform = &summary.platforms[0];
    let rows = read_energy_trace(&dir.path().join("energy.csv")).unwrap();

    // Duty-cycled allocation stays within 5% of its 10,000 mWh cap.
    let duty_rows = rows_for(&rows, "duty_cycled");
    assert!(!duty_rows.is_empty());
    let min_duty = duty_rows.iter().map(|r| r.balance_mwh).fold(f64::INFINITY, f64::min);
    assert!(min_duty >= 9_500.0, "duty-cycled dipped to {min_duty} mWh");
    assert!(platform.app("duty_cycled").unwrap().gating.is_empty());

    // Greedy exhausts its allocation and is disabled before harvest resumes
    // at t = 43,200 s, then re-enabled once energy is distributed again.
    let greedy = platform.app("greedy").unwrap();
    assert_eq!(greedy.gating.len(), 1, "greedy gating events: {:?}", greedy.gating);
    let disabled_at = greedy.gating[0].disabled_at_s;
    let enabled_at = greedy.gating[0].enabled_at_s.expect("greedy re-enabled");
    assert!(disabled_at < 43_200.0, "disabled at {disabled_at}, harvest starts at 43200");
    assert!(enabled_at > 43_200.0, "re-enabled at {enabled_at}");
    // Closed-form drain oracle: 3000 mWh at 250/0.89 mW rail drain plus a
    // 16/3 mW tax share depletes in 3000/286.232 h = 37,731.6 s.
    let expected = 3000.0 * 3600.0 / (250.0 / 0.89 + 16.0 / 3.0);
    assert!(
        (disabled_at - expected).abs() <= 3.0,
        "disabled at {disabled_at}, closed form {expected:.1}"
    );

    // Adaptive never gates and keeps running.
    let adaptive = platform.app("adaptive").unwrap();
    assert!(adaptive.gating.is_empty(), "adaptive gated: {:?}", adaptive.gating);
    assert!(adaptive.enabled_at_end);

    println!(
        "acceptance 03 PASS - 20 h isolation run in {elapsed:.2?}: duty-cycled min balance \
         {min_duty:.0} mWh, greedy gated {disabled_at:.0} s (oracle {expected:.0} s) and back \
         at {enabled_at:.0} s, adaptive never gated"
    );
}

fn isolation_pair(with_greedy: bool, harvest: &str) -> String {
    let greedy = r#",
                { "app_id": "greedy", "profile": { "builtin": "greedy" },
                  "initial_balance_mwh": 4000 }"#;
    format!(
        r#"{{
            "duration_s": 36000,
            "seed": 5,
            "platforms": [ {{
                "energy": {{ "tax_policy": "battery" }},
                "harvest": {harvest},
                "modules": [
                    {{ "app_id": "duty_cycled", "profile": {{ "builtin": "duty_cycled" }} }}{}
                ]
            }} ]
        }}"#,
        if with_greedy { greedy } else { "" }
    )
}

#[test]
fn criterion_04_pairwise_isolation_diffing() {
    // With the tax battery-side and zero harvest, the duty-cycled app's
    // balance trajectory must be bit-identical with and without the greedy
    // neighbor.
    let mut tracks: Vec<Vec<(f64, u64, u64)>> = Vec::new();
    for with_greedy in [false, true] {
        let scenario =
            Scenario::from_json(&isolation_pair(with_greedy, r#"{ "kind": "none" }"#)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run(&scenario, dir.path()).unwrap();
        let rows = read_energy_trace(&dir.path().join("energy.csv")).unwrap();
        tracks.push(
            rows.iter()
                .filter(|r| r.app_id == "duty_cycled")
                .map(|r| (r.t, r.balance_mwh.to_bits(), r.avg_power_mw.to_bits()))
                .collect(),
        );
    }
    assert_eq!(tracks[0].len(), tracks[1].len());
    assert_eq!(tracks[0], tracks[1], "duty-cycled trajectory changed with a greedy neighbor");

    // With harvest flowing, the only permitted channel is the documented
    // harvest split: the duty-cycled app never does better with a greedy
    // neighbor, and its own attributed draw is unchanged.
    let harvest = r#"{ "kind": "power_schedule", "points": [[0, 0], [18000, 1500]] }"#;
    let mut balance_tracks: Vec<Vec<(f64, f64, u64)>> = Vec::new();
    for with_greedy in [false, true] {
        let scenario = Scenario::from_json(&isolation_pair(with_greedy, harvest)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run(&scenario, dir.path()).unwrap();
        let rows = read_energy_trace(&dir.path().join("energy.csv")).unwrap();
        balance_tracks.push(
            rows.iter()
                .filter(|r| r.app_id == "duty_cycled")
                .map(|r| (r.t, r.balance_mwh, r.avg_power_mw.to_bits()))
                .collect(),
        );
    }
    for (solo, pair) in balance_tracks[0].iter().zip(&balance_tracks[1]) {
        assert_eq!(solo.0, pair.0);
        assert!(
            pair.1 <= solo.1 + 1e-9,
            "at t={}: balance with neighbor {} above solo {}",
            solo.0,
            pair.1,
            solo.1
        );
        assert_eq!(solo.2, pair.2, "attributed draw differs at t={}", solo.0);
    }
    println!(
        "acceptance 04 PASS - duty-cycled trajectory bit-identical without harvest \
         ({} trace points); with harvest it differs only through the split channel",
        tracks[0].len()
    );
}

#[test]
fn criterion_05_communication_policy() {
    let (summary, dir) = run_fixture("comm_policy.json");
    let rows = read_comm_trace(&dir.path().join("comm.csv")).unwrap();

    let flushes: Vec<f64> = rows
        .iter()
        .filter(|r| r.event == "cell_flush" && r.queue_len == 0)
        .map(|r| r.t)
        .collect();
    assert_eq!(flushes, vec![570.0, 1170.0], "flush completion times {flushes:?}");
    assert!(
        rows.iter().all(|r| r.event != "cell_flush" || r.t >= 570.0),
        "cellular activated before the queue reached 20"
    );
    let max_queue = rows.iter().map(|r| r.queue_len).max().unwrap();
    assert_eq!(max_queue, 20, "queue peaked at {max_queue}");
    let trigger = rows
        .iter()
        .find(|r| r.event == "enqueue" && r.queue_len == 20)
        .expect("20th enqueue present");
    assert_eq!(trigger.t, 570.0, "20th message enqueued at {}", trigger.t);

    let comm = &summary.platforms[0].comm;
    assert_eq!(comm.flush_count, 2);
    assert_eq!(comm.delivered_cellular, 40);
    assert_eq!(comm.delivered_lora, 0, "dead antenna must never deliver");

    // The radio returns to sleep once the session window closes.
    let mut engine = CommEngine::new(
        CommPolicy::default(),
        RadioLink { delivery_probability: 0.0, ..RadioLink::lorawan_default() },
        RadioLink::cellular_default(),
        RadioLink::ble_default(),
    );
    for i in 0..20 {
        engine
            .enqueue(OutboundMessage {
                app: 0,
                payload_len: 100,
                enqueue_time_s: i as f64,
                destination: "cloud".into(),
            })
            .unwrap();
    }
    let flush = engine.cellular_flush(570.0);
    assert_eq!(engine.radio_state(RadioKind::Cellular, 570.0 + flush.session_s / 2.0), RadioState::Active);
    assert_eq!(engine.radio_state(RadioKind::Cellular, 570.0 + flush.session_s + 0.1), RadioState::Sleep);

    println!(
        "acceptance 05 PASS - dead-antenna queue reached 20 at t=570 s, cellular flushed it \
         (sessions at 570 and 1170 s), queue emptied, radio back to sleep"
    );
}

#[test]
fn criterion_06_aloha_model() {
    let cfg = BusConfig::default();
    let n = 10_000u32;
    let mut report = Vec::new();
    for (i, g) in [0.1, 0.2, 0.5].into_iter().enumerate() {
        let mut rng = rng::stream(2024, &format!("acceptance-aloha-{i}"));
        let delivered = (0..n)
            .filter(|_| transfer(800, g, &cfg, &mut rng, Some(1)).is_some())
            .count();
        let ratio = delivered as f64 / n as f64;
        let p = (-2.0 * g).exp();
        let bound = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (ratio - p).abs() < bound,
            "G={g}: empirical {ratio:.4} vs e^(-2G)={p:.4}, 3 sigma bound {bound:.4}"
        );
        report.push(format!("G={g}: {ratio:.4} vs {p:.4}"));
    }
    let peak = 0.5 * success_probability(&cfg, 0.5);
    assert!((peak - 0.184).abs() < 5e-4, "throughput peak {peak}");
    println!(
        "acceptance 06 PASS - first-attempt success within 3 sigma of e^(-2G) [{}]; \
         analytic throughput peak {peak:.4} at G=0.5",
        report.join(", ")
    );
}

#[test]
fn criterion_07_time_sync_calibration() {
    let model = TimeSyncModel::default();
    let mut rng = rng::stream(99, "acceptance-timesync");
    let n = 10_000;
    let mut xs: Vec<f64> = (0..n).map(|_| model.sample_cross_platform_offset_ns(&mut rng)).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let mean = xs.iter().sum::<f64>() / n as f64;
    let p95 = xs[(0.95 * n as f64) as usize];
    assert!((mean - 75.0).abs() <= 3.0, "mean offset {mean:.2} ns outside 75 +/- 3");
    assert!((p95 - 97.0).abs() <= 5.0, "p95 offset {p95:.2} ns outside 97 +/- 5");

    // Within-platform module-to-module skew never exceeds the bound.
    let clock = PpsClock::new(123, "signpost", model, 5, 0);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let t = k as f64 * 17.3;
        let errors: Vec<f64> =
            (0..5).map(|m| clock.get_time(m, true, t).unwrap().observed_error_ns).collect();
        for a in &errors {
            for b in &errors {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst <= 6.0 + 1e-9, "within-platform skew {worst:.2} ns exceeds 6 ns");
    println!(
        "acceptance 07 PASS - simulated offsets: mean {mean:.1} ns (75 +/- 3), p95 {p95:.1} ns \
         (97 +/- 5); worst module skew {worst:.2} ns <= 6 ns"
    );
}

fn hourly_trace(weeks: &[f64]) -> Vec<(i64, f64)> {
    let mut v = Vec::new();
    for (w, &p) in weeks.iter().enumerate() {
        for h in 0..168 {
            v.push(((w as i64 * 168 + h) * 3600, p));
        }
    }
    v
}

#[test]
fn criterion_08_ccdf_pipeline() {
    // Exact step function on a known two-week trace.
    let dist = weekly_ccdf(&hourly_trace(&[10.0, 20.0]), 0.0, 1, 1.0).unwrap();
    assert_eq!(dist.points(), &[(10.0, 1.0), (20.0, 0.5)]);
    assert_eq!(dist.fraction_at_or_above(10.0), 1.0);
    assert_eq!(dist.fraction_at_or_above(10.5), 0.5);
    assert_eq!(dist.fraction_at_or_above(20.0), 0.5);
    assert_eq!(dist.fraction_at_or_above(20.5), 0.0);

    // Monotonicity holds on arbitrary inputs.
    let mut budgets = Vec::new();
    let mut state = 0x12345u64;
    for _ in 0..40 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        budgets.push((state >> 33) as f64 / 4.0e6);
    }
    let trace = hourly_trace(&budgets);
    let dist = weekly_ccdf(&trace, 2.0, 5, 0.76).unwrap();
    let mut prev = f64::INFINITY;
    for &(_, f) in dist.points() {
        assert!(f <= prev + 1e-12);
        prev = f;
    }

    // The published 3.84-147 mW endpoints need MTS2-class hourly data; when
    // a user supplies it, the pipeline must land within +/-20%.
    match std::env::var("SIGNPOST_MTS2_DIR") {
        Ok(dir) => {
            let dir = PathBuf::from(dir);
            let cases = [
                ("seattle.csv", 47.60, -122.33, 0.0, 3.84),
                ("san_diego.csv", 32.72, -117.16, 180.0, 147.0),
            ];
            for (file, lat, lon, azimuth, expected) in cases {
                let records = signpost_sim::io::read_irradiance_csv(&dir.join(file)).unwrap();
                let panel = PanelConfig {
                    latitude_deg: lat,
                    longitude_deg: lon,
                    azimuth_deg: azimuth,
                    ..PanelConfig::default()
                };
                let trace = signpost_sim::solar::harvest_trace(&records, &panel);
                let dist = weekly_ccdf(&trace, 16.0, 5, 0.76).unwrap();
                let p95 = dist.budget_at_fraction(0.95);
                assert!(
                    (p95 - expected).abs() <= 0.2 * expected,
                    "{file}: p95 budget {p95:.2} mW vs published {expected} +/- 20%"
                );
            }
            println!("acceptance 08 PASS - exact step CCDF, monotone; MTS2 endpoints within 20%");
        }
        Err(_) => {
            println!(
                "acceptance 08 PASS - exact step CCDF and monotonicity verified; \
                 MTS2 endpoint check skipped (set SIGNPOST_MTS2_DIR to hourly DNI/DHI data)"
            );
        }
    }
}

#[test]
fn criterion_09_global_energy_audit() {
    let (summary, _dir) = run_fixture("isolation_20h.json");
    for platform in &summary.platforms {
        assert!(
            platform.audit.relative_error < 1e-6,
            "{}: audit error {}",
            platform.name,
            platform.audit.relative_error
        );
    }

    // A service-heavy scenario exercises every attribution path.
    let scenario = Scenario::from_json(
        r#"{
            "duration_s": 7200,
            "seed": 31,
            "platforms": [ {
                "harvest": { "kind": "power_schedule", "points": [[0, 0], [1800, 1200]] },
                "comm": { "lorawan": { "delivery_probability": 0.7 } },
                "processing_paths": { "classify": { "duration_s": 2, "power_mw": 500 } },
                "modules": [
                    { "app_id": "weather", "profile": { "builtin": "weather" } },
                    { "app_id": "vc", "profile": { "builtin": "vehicle_count" },
                      "initial_balance_mwh": 1500 },
                    { "app_id": "rf", "profile": { "builtin": "rf_spectrum" },
                      "initial_balance_mwh": 2500 },
                    { "app_id": "rpc", "initial_balance_mwh": 500, "profile": { "phases": [
                        { "duration_s": 60, "power_mw": 10, "actions": [
                            { "kind": "rpc", "path": "classify" },
                            { "kind": "ble_advertise", "len": 31 },
                            { "kind": "storage_write", "len": 64 } ] } ],
                        "repeat": "loop" } }
                ]
            } ]
        }"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&scenario, dir.path()).unwrap();
    let audit = summary.platforms[0].audit;
    assert!(audit.relative_error < 1e-6, "audit error {}", audit.relative_error);
    println!(
        "acceptance 09 PASS - conservation identity within 1e-6 (isolation run and \
         service-heavy run, worst rel err {:.2e})",
        audit.relative_error
    );
}

#[test]
fn criterion_10_determinism() {
    let scenario = Scenario::load(&fixture("isolation_20h.json")).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run(&scenario, d1.path()).unwrap();
    run(&scenario, d2.path()).unwrap();
    let mut hashes = Vec::new();
    for name in ["energy.csv", "comm.csv", "bus.csv", "storage.csv", "summary.json"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(fnv64(&a), fnv64(&b), "{name} hash differs");
        assert_eq!(a, b, "{name} bytes differ");
        hashes.push(format!("{name}:{:016x}", fnv64(&a)));
    }
    println!(
        "acceptance 10 PASS - identical scenario+seed reproduced byte-identical traces [{}]",
        hashes.join(" ")
    );
}
