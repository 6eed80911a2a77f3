//! The queue-threshold communication policy with a dead LoRaWAN antenna:
//! messages pile up until the queue reaches twenty, then the cellular radio
//! activates, transfers everything in one session, and goes back to sleep.
//!
//! ```bash
//! cargo run --example comm_policy
//! ```

use signpost_sim::report::read_comm_trace;
use signpost_sim::scenario::Scenario;
use signpost_sim::sim::run;
use std::path::Path;

fn main() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/comm_policy.json");
    let scenario = Scenario::load(&fixture).expect("fixture scenario loads");
    let out = std::env::temp_dir().join("signpost-sim-example-comm");
    let summary = run(&scenario, &out).expect("simulation runs");

    println!("one 100 B message every 30 s; LoRaWAN delivery probability 0 (antenna removed)");
    println!();
    let rows = read_comm_trace(&out.join("comm.csv")).unwrap();
    let mut flushed_at: Vec<f64> = Vec::new();
    println!("{:>8}  {:<10} {:>9}  energy", "t (s)", "event", "queue");
    for row in &rows {
        match row.event.as_str() {
            "enqueue" if row.queue_len % 5 == 0 || row.queue_len >= 19 => {
                println!("{:>8.0}  {:<10} {:>9}", row.t, row.event, row.queue_len);
            }
            "cell_flush" if row.queue_len == 0 => {
                println!(
                    "{:>8.0}  {:<10} {:>9}  session complete",
                    row.t, "cell_flush", row.queue_len
                );
                flushed_at.push(row.t);
            }
            _ => {}
        }
    }

    let comm = &summary.platforms[0].comm;
    println!();
    println!(
        "{} enqueued, {} failed LoRa attempts, {} cellular session(s) carried {} messages",
        comm.enqueued, comm.failed_lora, comm.flush_count, comm.delivered_cellular
    );
    let energy: f64 = rows.iter().map(|r| r.energy_mwh).sum();
    println!("total radio energy charged to the sender: {energy:.3} mWh");
    println!("cellular sessions completed at: {flushed_at:?} s");
}
