//! Replay the bundled synthetic household under all ten dispatch
//! strategies on tariff 1 and print the per-kWh cost of each.
//!
//! Run with: cargo run --release --example simulate_strategies

use solarsched::fixtures::{synthetic_dataset, SyntheticConfig};
use solarsched::sim::{simulate, SimOptions, Strategy};
use solarsched::tariff::bundled;

fn main() {
    let days: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(90);
    let ds = synthetic_dataset(&SyntheticConfig {
        days,
        ..SyntheticConfig::default()
    });
    let tariff = bundled("tariff1").unwrap();
    let opts = SimOptions {
        seed: 42,
        ..SimOptions::default()
    };

    println!("{days} days, tariff {}\n", tariff.name);
    println!("{:<16} {:>10} {:>12} {:>10}", "strategy", "c/kWh", "total $", "fallback h");
    let mut automatic_cost = None;
    for strategy in Strategy::ALL {
        let start = std::time::Instant::now();
        let r = simulate(&ds, &tariff, strategy, &opts).unwrap().report;
        if strategy == Strategy::Automatic {
            automatic_cost = Some(r.total_cost_c);
        }
        let saving = automatic_cost
            .map(|a| (a - r.total_cost_c) / a * 100.0)
            .unwrap_or(0.0);
        println!(
            "{:<16} {:>10.4} {:>12.2} {:>10}   ({saving:+.2}% vs automatic, {:.1}s)",
            strategy.name(),
            r.cost_c_per_kwh,
            r.total_cost_c / 100.0,
            r.hours_automatic_fallback,
            start.elapsed().as_secs_f64(),
        );
    }
}
