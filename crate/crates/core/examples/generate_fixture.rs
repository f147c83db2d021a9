//! Write the bundled synthetic household to a CSV usable by the CLI.
//!
//! Run with: cargo run --example generate_fixture -- out/site.csv [days] [seed]

use solarsched::fixtures::{synthetic_dataset, SyntheticConfig};
use solarsched::timeseries::{eligibility, write_dataset};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "site.csv".to_string());
    let days: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(90);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);

    let ds = synthetic_dataset(&SyntheticConfig {
        days,
        seed,
        ..SyntheticConfig::default()
    });
    if let Some(dir) = std::path::Path::new(&path).parent() {
        std::fs::create_dir_all(dir).expect("create output directory");
    }
    write_dataset(&ds, &path).expect("write dataset");
    let rep = eligibility(&ds).unwrap();
    println!(
        "wrote {days} days to {path} (mean load {:.0} W, mean pv {:.0} W, pv/load {:.3})",
        rep.mean_load_w, rep.mean_pv_w, rep.pv_load_ratio
    );
}
