//! Scratch diagnostic: trace pathology scan + block means.
use solarsched::fixtures::{synthetic_dataset, SyntheticConfig};
use solarsched::sim::{simulate, HourMode, SimOptions, Strategy};
use solarsched::tariff::bundled;

fn main() {
    let ds = synthetic_dataset(&SyntheticConfig::default());
    let tariff = bundled("tariff1").unwrap();
    let opts = SimOptions { seed: 42, keep_trace: true, ..SimOptions::default() };
    for s in [Strategy::Q5050, Strategy::Q6040, Strategy::Persist1h, Strategy::LoadPersist, Strategy::Perfect] {
        let r = simulate(&ds, &tariff, s, &opts).unwrap();
        let mut discharge_export_h = 0;
        let mut discharge_export_kwh = 0.0;
        let mut charge_hours = 0;
        let mut blocks = [0.0f64; 3];
        for (i, row) in r.trace.iter().enumerate() {
            if row.mode == HourMode::Discharge && row.export_kwh > 1e-9 {
                discharge_export_h += 1;
                discharge_export_kwh += row.export_kwh;
            }
            if row.mode == HourMode::Charge { charge_hours += 1; }
            blocks[(i / 720).min(2)] += row.cost_c;
        }
        println!(
            "{:<12} cost blocks {:>7.1} {:>7.1} {:>7.1} | cmd-charge h {:>4} | discharge+export h {:>3} ({:.2} kWh)",
            s.name(), blocks[0], blocks[1], blocks[2], charge_hours, discharge_export_h, discharge_export_kwh
        );
    }
}
