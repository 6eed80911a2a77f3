//! GPS/PPS synchronization quality: sampled cross-platform offsets against
//! the calibrated mean/p95, and the bounded module-to-module skew within a
//! single platform.
//!
//! ```bash
//! cargo run --example time_sync
//! ```

use signpost_sim::rng;
use signpost_sim::services::{PpsClock, TimeSyncModel};

fn main() {
    let model = TimeSyncModel::default();
    let mut rng = rng::stream(42, "time-sync-example");
    let n = 10_000;
    let mut samples: Vec<f64> =
        (0..n).map(|_| model.sample_cross_platform_offset_ns(&mut rng)).collect();
    samples.sort_by(|a, b| a.total_cmp(b));
    let mean = samples.iter().sum::<f64>() / n as f64;
    let p50 = samples[n / 2];
    let p95 = samples[(0.95 * n as f64) as usize];
    let p99 = samples[(0.99 * n as f64) as usize];

    println!("cross-platform PPS offset over {n} sampled edges:");
    println!("  mean {mean:6.1} ns   (calibration target 75 ns)");
    println!("  p50  {p50:6.1} ns");
    println!("  p95  {p95:6.1} ns   (calibration target 97 ns)");
    println!("  p99  {p99:6.1} ns");
    println!();

    // Histogram, 10 ns bins.
    let max = samples.last().copied().unwrap_or(0.0);
    let bins = (max / 10.0).ceil() as usize + 1;
    let mut hist = vec![0usize; bins];
    for &s in &samples {
        hist[(s / 10.0) as usize] += 1;
    }
    for (i, count) in hist.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let bar = "#".repeat(count * 240 / n);
        println!("  {:>3}-{:<3} ns {bar}", i * 10, (i + 1) * 10);
    }

    println!();
    let clock = PpsClock::new(1, "signpost", model, 5, 0);
    let mut worst: f64 = 0.0;
    for edge in 0..500 {
        let t = edge as f64;
        let errors: Vec<f64> =
            (0..5).map(|m| clock.get_time(m, true, t).unwrap().observed_error_ns).collect();
        for a in &errors {
            for b in &errors {
                worst = worst.max((a - b).abs());
            }
        }
    }
    println!("five modules on one platform share each PPS edge; worst observed");
    println!("module-to-module skew over 500 edges: {worst:.2} ns (bound 6 ns)");
}
