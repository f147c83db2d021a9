//! Shared verification oracles for the integration suites.
//!
//! Everything here recomputes results from first principles (grid
//! enumeration, dynamic programming over a discretized state of charge)
//! and never calls the production solver, so agreement is meaningful.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solarsched::battery::BatteryConfig;
use solarsched::lp::{GridLimits, LpInstance};

/// Cheapest grid interaction for one hour: minimize `t*I - f*E` subject to
/// `I - E = net`, `0 <= I <= imax`, `0 <= E <= emax`. Infinite when no
/// feasible pair exists.
pub fn hour_grid_cost(net: f64, t: f64, f: f64, imax: f64, emax: f64) -> f64 {
    let e_lo = (-net).max(0.0);
    let e_hi = emax.min(imax - net);
    if e_lo > e_hi + 1e-12 {
        return f64::INFINITY;
    }
    // cost(E) = t*net + (t - f) * E, linear in E.
    let e = if t >= f { e_lo } else { e_hi };
    t * (net + e) - f * e
}

/// Brute-force dynamic program over a discretized SoC grid.
///
/// State: SoC at the end of each hour, restricted to multiples of
/// `grid_step` within the battery band. Battery moves between grid points
/// translate exactly into a discharge or charge amount via the loss model;
/// simultaneous charge and discharge is never useful with wide grid limits
/// and a nonnegative feed-in rate, so pure moves suffice.
pub fn dp_oracle(inst: &LpInstance, grid_step: f64) -> f64 {
    let b = &inst.battery;
    let span = b.soc_max_kwh - b.soc_min_kwh;
    let n = (span / grid_step).round() as usize + 1;
    assert!(
        (span - (n - 1) as f64 * grid_step).abs() < 1e-9,
        "battery band must be a multiple of the grid step"
    );
    let grid: Vec<f64> = (0..n).map(|i| b.soc_min_kwh + i as f64 * grid_step).collect();
    let h = inst.horizon_h;

    // value[i]: cost-to-go from the start of the next hour with SoC grid[i].
    let mut value = vec![0.0f64; n];
    for hour in (0..h).rev() {
        let t = inst.import_price_c[hour];
        let f = inst.export_price_c[hour];
        let net_base = inst.load_kwh[hour] - inst.pv_kwh[hour];
        let mut next = vec![f64::INFINITY; n];
        for (i, &s_from) in grid.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, &s_to) in grid.iter().enumerate() {
                let ds = s_to - s_from;
                let flow = if ds <= 0.0 {
                    // Deliver q out of the battery.
                    let q = -ds / (1.0 + b.loss_factor);
                    if q > b.rate_limit_kwh + 1e-12 {
                        continue;
                    }
                    q
                } else {
                    let r = ds / (1.0 - b.loss_factor);
                    if r > b.rate_limit_kwh + 1e-12 {
                        continue;
                    }
                    -r
                };
                let cost = hour_grid_cost(
                    net_base - flow,
                    t,
                    f,
                    inst.limits.import_kwh,
                    inst.limits.export_kwh,
                );
                let total = cost + value[j];
                if total < best {
                    best = total;
                }
            }
            next[i] = best;
        }
        value = next;
    }

    let i0 = ((inst.initial_soc_kwh - b.soc_min_kwh) / grid_step).round() as usize;
    assert!(
        (inst.initial_soc_kwh - grid[i0.min(n - 1)]).abs() < 1e-9,
        "initial SoC must sit on the oracle grid"
    );
    value[i0.min(n - 1)]
}

fn snap(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Randomized small instance for oracle-equivalence runs: short horizon,
/// small battery, prices on a 0.1 c grid and energies on a 0.01 kWh grid so
/// vertex optima land on (or within tolerance of) the oracle grid.
pub fn random_small_instance(rng: &mut ChaCha8Rng) -> LpInstance {
    let horizon_h = rng.gen_range(2..=6usize);
    let capacity = snap(rng.gen_range(1.0..=3.0f64), 0.01);
    let soc_min = if rng.gen_bool(0.5) {
        0.0
    } else {
        snap(capacity * 0.2, 0.01)
    };
    let rate = snap(rng.gen_range(0.5..=2.0f64), 0.01);
    let battery = BatteryConfig::new(capacity, soc_min, capacity, rate, 0.08).unwrap();
    let initial_soc_kwh = snap(rng.gen_range(soc_min..=capacity), 0.01);

    let mut import_price_c = Vec::with_capacity(horizon_h);
    let mut export_price_c = Vec::with_capacity(horizon_h);
    let mut load_kwh = Vec::with_capacity(horizon_h);
    let mut pv_kwh = Vec::with_capacity(horizon_h);
    for _ in 0..horizon_h {
        let t = snap(rng.gen_range(5.0..=60.0f64), 0.1);
        // Mostly below the import price, occasionally above it so the
        // oracle's wash-trading arm gets exercised too.
        let f = if rng.gen_bool(0.9) {
            snap(t * rng.gen_range(0.0..=0.85f64), 0.1)
        } else {
            snap(t + rng.gen_range(0.1..=5.0f64), 0.1)
        };
        import_price_c.push(t);
        export_price_c.push(f);
        load_kwh.push(snap(rng.gen_range(0.0..=2.5f64), 0.01));
        pv_kwh.push(if rng.gen_bool(0.4) {
            0.0
        } else {
            snap(rng.gen_range(0.0..=2.5f64), 0.01)
        });
    }

    LpInstance {
        horizon_h,
        import_price_c,
        export_price_c,
        load_kwh,
        pv_kwh,
        initial_soc_kwh,
        battery,
        limits: GridLimits::default(),
    }
}

/// Randomized 24-hour day with tariff-like prices: a contiguous peak
/// window on top of an off-peak floor, PV in daylight hours, evening-ish
/// load. Used for the dominance suite.
pub fn random_day_instance(rng: &mut ChaCha8Rng) -> LpInstance {
    let horizon_h = 24;
    let soc_min = if rng.gen_bool(0.5) { 0.0 } else { 1.3 };
    let battery = BatteryConfig::new(6.5, soc_min, 6.5, 4.6, 0.08).unwrap();

    let off = snap(rng.gen_range(10.0..=30.0f64), 0.1);
    let peak = off + snap(rng.gen_range(0.0..=30.0f64), 0.1);
    let f = snap(off * rng.gen_range(0.2..=0.9f64), 0.1);
    let peak_start = rng.gen_range(6..=16usize);
    let peak_len = rng.gen_range(2..=8usize);

    let mut import_price_c = Vec::with_capacity(horizon_h);
    let mut export_price_c = Vec::with_capacity(horizon_h);
    let mut load_kwh = Vec::with_capacity(horizon_h);
    let mut pv_kwh = Vec::with_capacity(horizon_h);
    for h in 0..horizon_h {
        let in_peak = h >= peak_start && h < peak_start + peak_len;
        import_price_c.push(if in_peak { peak } else { off });
        export_price_c.push(f);
        let load = if (17..22).contains(&h) {
            rng.gen_range(0.5..=2.0)
        } else {
            rng.gen_range(0.1..=0.8)
        };
        load_kwh.push(snap(load, 0.01));
        let pv = if (7..17).contains(&h) {
            rng.gen_range(0.0..=2.0)
        } else {
            0.0
        };
        pv_kwh.push(snap(pv, 0.01));
    }

    LpInstance {
        horizon_h,
        import_price_c,
        export_price_c,
        load_kwh,
        pv_kwh,
        initial_soc_kwh: soc_min,
        battery,
        limits: GridLimits::default(),
    }
}

/// Cost of running the automatic rules over an instance's hours with the
/// instance's own prices, starting from its initial SoC.
pub fn automatic_trajectory_cost(inst: &LpInstance) -> f64 {
    use solarsched::automatic::automatic_step;
    use solarsched::battery::SocState;
    let mut soc = SocState::new(&inst.battery, inst.initial_soc_kwh).unwrap();
    let mut cost = 0.0;
    for h in 0..inst.horizon_h {
        let flows = automatic_step(&inst.battery, soc, inst.load_kwh[h], inst.pv_kwh[h]);
        cost += inst.import_price_c[h] * flows.import_kwh
            - inst.export_price_c[h] * flows.export_kwh;
        soc = flows.soc_end;
    }
    cost
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Check the wash-trading and throughput tie-break invariants on a solved
/// schedule; returns a description of the first violation.
pub fn check_solution_invariants(
    inst: &LpInstance,
    schedule: &solarsched::lp::DispatchSchedule,
) -> Result<(), String> {
    let h = inst.horizon_h;
    for n in 0..h {
        let t = inst.import_price_c[n];
        let f = inst.export_price_c[n];
        let i = schedule.import_kwh[n];
        let e = schedule.export_kwh[n];
        if t > f + 1e-9 && e < inst.limits.export_kwh - 1e-6 && i.min(e) > 1e-9 {
            return Err(format!(
                "wash trade at hour {n}: import {i:.9}, export {e:.9} with t {t} > f {f}"
            ));
        }
        // Battery throughput tie-break applies when the SoC trajectory from
        // this hour onward stays strictly inside its band.
        let margin = 1e-6;
        let interior = (n..h).all(|k| {
            schedule.soc_kwh[k] > inst.battery.soc_min_kwh + margin
                && schedule.soc_kwh[k] < inst.battery.soc_max_kwh - margin
        });
        if interior && schedule.discharge_kwh[n].min(schedule.charge_kwh[n]) > 1e-9 {
            return Err(format!(
                "simultaneous charge/discharge at hour {n}: q {:.9}, r {:.9}",
                schedule.discharge_kwh[n], schedule.charge_kwh[n]
            ));
        }
    }
    Ok(())
}

/// Constraint residuals of a schedule against its instance; returns the
/// largest absolute violation over balance, transition and bounds.
pub fn max_constraint_violation(
    inst: &LpInstance,
    schedule: &solarsched::lp::DispatchSchedule,
) -> f64 {
    let b = &inst.battery;
    let mut worst = 0.0f64;
    let mut prev = inst.initial_soc_kwh;
    for n in 0..inst.horizon_h {
        let balance = (inst.load_kwh[n] - inst.pv_kwh[n])
            - ((schedule.discharge_kwh[n] - schedule.charge_kwh[n]) + schedule.import_kwh[n]
                - schedule.export_kwh[n]);
        worst = worst.max(balance.abs());
        let transition = schedule.soc_kwh[n]
            - (prev - schedule.discharge_kwh[n] * (1.0 + b.loss_factor)
                + schedule.charge_kwh[n] * (1.0 - b.loss_factor));
        worst = worst.max(transition.abs());
        worst = worst.max(b.soc_min_kwh - schedule.soc_kwh[n]);
        worst = worst.max(schedule.soc_kwh[n] - b.soc_max_kwh);
        worst = worst.max(-schedule.import_kwh[n]);
        worst = worst.max(-schedule.export_kwh[n]);
        worst = worst.max(schedule.import_kwh[n] - inst.limits.import_kwh);
        worst = worst.max(schedule.export_kwh[n] - inst.limits.export_kwh);
        let b_flow = schedule.discharge_kwh[n] - schedule.charge_kwh[n];
        worst = worst.max(b_flow.abs() - b.rate_limit_kwh);
        prev = schedule.soc_kwh[n];
    }
    worst
}
