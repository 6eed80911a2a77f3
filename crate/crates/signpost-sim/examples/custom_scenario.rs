//! Building a scenario in code: two platforms, custom inline profiles using
//! the service actions (storage, processing offload, inter-module
//! messaging), a processing path catalog, and scenario JSON round-tripping.
//!
//! ```bash
//! cargo run --example custom_scenario
//! ```

use signpost_sim::profile::{Action, ModuleProfile, Phase, RepeatPolicy};
use signpost_sim::scenario::{
    HarvestSource, ModuleSpec, PlatformSpec, ProfileSpec, Scenario,
};
use signpost_sim::services::ProcessingPath;
use signpost_sim::sim::run;

fn main() {
    let sampler = ModuleProfile {
        app_id: String::new(), // filled from the module slot
        phases: vec![
            Phase {
                duration_s: 20.0,
                power_mw: 35.0,
                actions: vec![
                    Action::GetTime,
                    Action::StorageWrite { len: 48 },
                    Action::MessagingSend { dst: "uploader".into(), len: 48 },
                ],
            },
            Phase { duration_s: 40.0, power_mw: 1.0, actions: vec![] },
        ],
        repeat: RepeatPolicy::Loop,
        adaptive: None,
    };
    let uploader = ModuleProfile {
        app_id: String::new(),
        phases: vec![Phase {
            duration_s: 120.0,
            power_mw: 12.0,
            actions: vec![
                Action::MessagingSubscribe,
                Action::Rpc { path: "compress".into() },
                Action::SendBytes { len: 256, destination: "cloud".into() },
            ],
        }],
        repeat: RepeatPolicy::Loop,
        adaptive: None,
    };

    let mut platform = PlatformSpec {
        name: "corner-post".into(),
        harvest: HarvestSource::PowerSchedule {
            points: vec![(0.0, 0.0), (3600.0, 900.0), (14400.0, 150.0)],
        },
        modules: vec![
            ModuleSpec {
                app_id: "uploader".into(),
                profile: ProfileSpec::Inline(uploader),
                initial_balance_mwh: Some(4_000.0),
                max_capacity_mwh: None,
            },
            ModuleSpec {
                app_id: "sampler".into(),
                profile: ProfileSpec::Inline(sampler),
                initial_balance_mwh: Some(4_000.0),
                max_capacity_mwh: None,
            },
        ],
        ..PlatformSpec::default()
    };
    platform
        .processing_paths
        .insert("compress".into(), ProcessingPath { duration_s: 3.0, power_mw: 400.0 });

    let scenario = Scenario {
        schema_version: 1,
        duration_s: 6.0 * 3600.0,
        seed: Some(2),
        start_time_utc: Some("2017-06-01T06:00:00Z".into()),
        platforms: vec![platform],
    };

    // Scenarios serialize to the same JSON the CLI consumes.
    let out = std::env::temp_dir().join("signpost-sim-example-custom");
    std::fs::create_dir_all(&out).unwrap();
    let json_path = out.join("scenario.json");
    std::fs::write(&json_path, scenario.to_json()).unwrap();
    println!("scenario written to {}", json_path.display());

    let summary = run(&scenario, &out).expect("simulation runs");
    for app in &summary.platforms[0].apps {
        println!(
            "{:<9} avg {:6.2} mW  breakdown: sensing {:7.2}, comm {:5.2}, processing {:5.2}, \
             time {:4.2}, storage {:4.2} mWh",
            app.app_id,
            app.avg_power_mw,
            app.attributed.sensing_mwh,
            app.attributed.comm_mwh,
            app.attributed.processing_mwh,
            app.attributed.time_location_mwh,
            app.attributed.storage_mwh,
        );
        println!(
            "          {} stored records, {} rpc jobs, {} msgs enqueued, {} msgs received over the bus",
            app.counters.storage_writes,
            app.counters.rpc_completed,
            app.counters.messages_enqueued,
            app.counters.messages_received,
        );
    }
    println!();
    println!(
        "audit rel err {:.1e}; traces in {}",
        summary.platforms[0].audit.relative_error,
        out.display()
    );
}
