//! The 24-hour cost-minimization program and command extraction.
//!
//! Decision variables per hour: grid import `I`, grid export `E`, battery
//! discharge `Q`, battery charge `R` and end-of-hour state of charge `S`.
//! The program minimizes `sum(t_h I_h - f_h E_h)` subject to, per hour:
//!
//! ```text
//! load - pv = (Q - R) + I - E
//! S_h = S_{h-1} - Q (1 + loss) + R (1 - loss)
//! soc_min <= S <= soc_max,  0 <= I <= import_limit,  0 <= E <= export_limit
//! -rate <= Q - R <= rate,   Q, R >= 0
//! ```
//!
//! A vanishing per-kWh penalty on battery throughput, slightly heavier in
//! earlier hours, breaks ties deterministically: among equal-cost plans the
//! solver avoids simultaneous charge/discharge and places battery action as
//! late as possible. The penalty is orders of magnitude below any real price
//! difference and is excluded from the reported objective.

mod simplex;

pub use simplex::SimplexError;

use crate::battery::{BatteryCommand, BatteryConfig, SocState};
use crate::forecast::{ForecastSet, QuantileChoice};
use crate::tariff::TariffSchedule;
use chrono::{DateTime, Duration, FixedOffset};
use thiserror::Error;

/// Tie-break penalty on battery throughput, c/kWh.
const THROUGHPUT_EPS: f64 = 1e-6;
/// Battery flows below this are treated as zero when picking a command.
pub const COMMAND_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("forecast horizon too short: need {need} hours from {start}, have {have}")]
    ForecastTooShort {
        start: DateTime<FixedOffset>,
        need: usize,
        have: usize,
    },
    #[error("zero-length horizon")]
    EmptyHorizon,
    #[error("instance is malformed: {0}")]
    BadInstance(String),
    #[error("no command available: schedule status is {0:?}")]
    NotOptimal(SolveStatus),
}

/// Per-hour grid caps, kWh. The defaults are wide enough to never bind for
/// a residential site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLimits {
    pub import_kwh: f64,
    pub export_kwh: f64,
}

impl Default for GridLimits {
    fn default() -> Self {
        Self {
            import_kwh: 15.0,
            export_kwh: 15.0,
        }
    }
}

/// A fully specified 24-hour (by default) decision problem.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub horizon_h: usize,
    /// Import price per hour, c/kWh.
    pub import_price_c: Vec<f64>,
    /// Export (feed-in) price per hour, c/kWh.
    pub export_price_c: Vec<f64>,
    /// Load forecast per hour, kWh.
    pub load_kwh: Vec<f64>,
    /// PV forecast per hour, kWh.
    pub pv_kwh: Vec<f64>,
    pub initial_soc_kwh: f64,
    pub battery: BatteryConfig,
    pub limits: GridLimits,
}

impl LpInstance {
    pub fn validate(&self) -> Result<(), LpError> {
        if self.horizon_h == 0 {
            return Err(LpError::EmptyHorizon);
        }
        for (name, v) in [
            ("import_price_c", &self.import_price_c),
            ("export_price_c", &self.export_price_c),
            ("load_kwh", &self.load_kwh),
            ("pv_kwh", &self.pv_kwh),
        ] {
            if v.len() != self.horizon_h {
                return Err(LpError::BadInstance(format!(
                    "{name} has length {}, expected {}",
                    v.len(),
                    self.horizon_h
                )));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(LpError::BadInstance(format!(
                    "{name} contains a negative or non-finite value"
                )));
            }
        }
        self.battery
            .validate()
            .map_err(|e| LpError::BadInstance(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// A solved schedule: hourly flow vectors, end-of-hour SoC trajectory and
/// the grid cost in cents (tie-break penalty excluded).
#[derive(Debug, Clone)]
pub struct DispatchSchedule {
    pub status: SolveStatus,
    pub import_kwh: Vec<f64>,
    pub export_kwh: Vec<f64>,
    pub discharge_kwh: Vec<f64>,
    pub charge_kwh: Vec<f64>,
    pub soc_kwh: Vec<f64>,
    pub objective_c: f64,
}

impl DispatchSchedule {
    fn infeasible() -> Self {
        Self {
            status: SolveStatus::Infeasible,
            import_kwh: Vec::new(),
            export_kwh: Vec::new(),
            discharge_kwh: Vec::new(),
            charge_kwh: Vec::new(),
            soc_kwh: Vec::new(),
            objective_c: f64::NAN,
        }
    }

    /// Battery flow for hour `h`, positive when discharging.
    pub fn battery_flow_kwh(&self, h: usize) -> f64 {
        self.discharge_kwh[h] - self.charge_kwh[h]
    }

    /// Serialize as `hour,import_kwh,export_kwh,discharge_kwh,charge_kwh,soc_kwh,command`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("hour,import_kwh,export_kwh,discharge_kwh,charge_kwh,soc_kwh,command\n");
        for h in 0..self.import_kwh.len() {
            let command = hour_command_label(self.discharge_kwh[h], self.charge_kwh[h]);
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                h,
                self.import_kwh[h],
                self.export_kwh[h],
                self.discharge_kwh[h],
                self.charge_kwh[h],
                self.soc_kwh[h],
                command
            ));
        }
        out
    }
}

fn hour_command_label(discharge: f64, charge: f64) -> String {
    let flow = discharge - charge;
    if flow > COMMAND_EPS {
        format!("discharge@{flow:.6}")
    } else if flow < -COMMAND_EPS {
        format!("charge@{:.6}", -flow)
    } else {
        "automatic".to_string()
    }
}

/// Assemble an instance from a tariff, a forecast and the battery state.
///
/// Prices are read per hour from the tariff; load and PV come from the
/// forecast at the quantile levels in `choice`. The forecast must cover
/// `horizon_h` hours starting at `start`.
pub fn build_instance(
    tariff: &TariffSchedule,
    forecast: &ForecastSet,
    start: DateTime<FixedOffset>,
    initial_soc: SocState,
    battery: &BatteryConfig,
    limits: GridLimits,
    choice: QuantileChoice,
    horizon_h: usize,
) -> Result<LpInstance, LpError> {
    if horizon_h == 0 {
        return Err(LpError::EmptyHorizon);
    }
    let offset = forecast.hour_offset(start).ok_or(LpError::ForecastTooShort {
        start,
        need: horizon_h,
        have: 0,
    })?;
    if offset + horizon_h > forecast.horizon_h {
        return Err(LpError::ForecastTooShort {
            start,
            need: horizon_h,
            have: forecast.horizon_h.saturating_sub(offset),
        });
    }

    let mut import_price_c = Vec::with_capacity(horizon_h);
    let mut export_price_c = Vec::with_capacity(horizon_h);
    let mut load_kwh = Vec::with_capacity(horizon_h);
    let mut pv_kwh = Vec::with_capacity(horizon_h);
    for h in 0..horizon_h {
        let t = start + Duration::hours(h as i64);
        let rates = tariff.rates_at(t);
        import_price_c.push(rates.import.as_c_per_kwh());
        export_price_c.push(rates.export.as_c_per_kwh());
        let i = offset + h;
        load_kwh.push(forecast.load_q[i].level(choice.load));
        pv_kwh.push(forecast.pv_q[i].level(choice.pv));
    }

    let inst = LpInstance {
        horizon_h,
        import_price_c,
        export_price_c,
        load_kwh,
        pv_kwh,
        initial_soc_kwh: initial_soc.kwh(),
        battery: *battery,
        limits,
    };
    inst.validate()?;
    Ok(inst)
}

/// Solve the program to an optimal vertex. Deterministic: identical
/// instances produce bit-identical schedules.
pub fn solve(inst: &LpInstance) -> Result<DispatchSchedule, LpError> {
    inst.validate()?;
    let h = inst.horizon_h;
    let b = &inst.battery;
    let loss = b.loss_factor;

    let mut p = simplex::Problem::default();
    // Column layout per hour: import, export, discharge, charge, soc;
    // pair-range slacks follow after all hour blocks.
    let mut idx_import = Vec::with_capacity(h);
    let mut idx_export = Vec::with_capacity(h);
    let mut idx_q = Vec::with_capacity(h);
    let mut idx_r = Vec::with_capacity(h);
    let mut idx_s = Vec::with_capacity(h);
    for n in 0..h {
        // Battery action in earlier hours carries a slightly larger penalty,
        // so equal-cost plans keep energy in the battery longer.
        let eps = THROUGHPUT_EPS * (1.0 + (h - 1 - n) as f64 / h as f64);
        idx_import.push(p.add_var(inst.import_price_c[n], 0.0, inst.limits.import_kwh));
        idx_export.push(p.add_var(-inst.export_price_c[n], 0.0, inst.limits.export_kwh));
        idx_q.push(p.add_var(eps, 0.0, f64::INFINITY));
        idx_r.push(p.add_var(eps, 0.0, f64::INFINITY));
        idx_s.push(p.add_var(0.0, b.soc_min_kwh, b.soc_max_kwh));
    }
    for n in 0..h {
        // Q - R + slack = rate, slack in [0, 2 rate]  <=>  |Q - R| <= rate.
        let slack = p.add_var(0.0, 0.0, 2.0 * b.rate_limit_kwh);
        p.add_eq(
            vec![(idx_q[n], 1.0), (idx_r[n], -1.0), (slack, 1.0)],
            b.rate_limit_kwh,
        );
    }
    for n in 0..h {
        // Energy balance.
        p.add_eq(
            vec![
                (idx_q[n], 1.0),
                (idx_r[n], -1.0),
                (idx_import[n], 1.0),
                (idx_export[n], -1.0),
            ],
            inst.load_kwh[n] - inst.pv_kwh[n],
        );
        // SoC transition.
        let mut coeffs = vec![
            (idx_s[n], 1.0),
            (idx_q[n], 1.0 + loss),
            (idx_r[n], -(1.0 - loss)),
        ];
        let rhs = if n == 0 {
            inst.initial_soc_kwh
        } else {
            coeffs.push((idx_s[n - 1], -1.0));
            0.0
        };
        p.add_eq(coeffs, rhs);
    }

    let solution = match p.solve() {
        Ok(s) => s,
        Err(SimplexError::Infeasible) => return Ok(DispatchSchedule::infeasible()),
        Err(e) => return Err(LpError::BadInstance(e.to_string())),
    };

    let clean = |v: f64| if v.abs() < COMMAND_EPS { 0.0 } else { v };
    let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&j| clean(solution.x[j])).collect() };
    let import_kwh = pick(&idx_import);
    let export_kwh = pick(&idx_export);
    let discharge_kwh = pick(&idx_q);
    let charge_kwh = pick(&idx_r);
    let soc_kwh: Vec<f64> = idx_s.iter().map(|&j| solution.x[j]).collect();

    // Reported objective is the pure grid cost, without the tie-break term.
    let objective_c: f64 = (0..h)
        .map(|n| {
            inst.import_price_c[n] * import_kwh[n] - inst.export_price_c[n] * export_kwh[n]
        })
        .sum();

    Ok(DispatchSchedule {
        status: SolveStatus::Optimal,
        import_kwh,
        export_kwh,
        discharge_kwh,
        charge_kwh,
        soc_kwh,
        objective_c,
    })
}

/// The command the inverter should hold for the first hour of a schedule.
pub fn first_command(schedule: &DispatchSchedule) -> Result<BatteryCommand, LpError> {
    if schedule.status != SolveStatus::Optimal {
        return Err(LpError::NotOptimal(schedule.status));
    }
    let flow = schedule.battery_flow_kwh(0);
    Ok(if flow > COMMAND_EPS {
        BatteryCommand::Discharge(flow)
    } else if flow < -COMMAND_EPS {
        BatteryCommand::Charge(-flow)
    } else {
        BatteryCommand::Automatic
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn battery_zero_floor() -> BatteryConfig {
        BatteryConfig::new(6.5, 0.0, 6.5, 4.6, 0.08).unwrap()
    }

    fn toy_instance(
        t: &[f64],
        f: &[f64],
        load: &[f64],
        pv: &[f64],
        s0: f64,
        battery: BatteryConfig,
    ) -> LpInstance {
        LpInstance {
            horizon_h: t.len(),
            import_price_c: t.to_vec(),
            export_price_c: f.to_vec(),
            load_kwh: load.to_vec(),
            pv_kwh: pv.to_vec(),
            initial_soc_kwh: s0,
            battery,
            limits: GridLimits::default(),
        }
    }

    #[test]
    fn two_hour_precharge() {
        // Cheap hour then expensive hour: charge 1.08/0.92 kWh in hour 0 so
        // the battery can serve 1 kWh of load in hour 1.
        let inst = toy_instance(
            &[10.0, 40.0],
            &[5.0, 5.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            0.0,
            battery_zero_floor(),
        );
        let s = solve(&inst).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        let r0 = 1.08 / 0.92;
        assert!((s.charge_kwh[0] - r0).abs() < 1e-6, "{:?}", s.charge_kwh);
        assert!((s.discharge_kwh[1] - 1.0).abs() < 1e-6);
        assert!((s.objective_c - 10.0 * r0).abs() < 1e-6);
        assert!((s.objective_c - 11.7391).abs() < 1e-3);

        let cmd = first_command(&s).unwrap();
        match cmd {
            BatteryCommand::Charge(r) => assert!((r - r0).abs() < 1e-6),
            other => panic!("expected charge, got {other:?}"),
        }
    }

    #[test]
    fn balanced_no_arbitrage_is_all_zero() {
        // Equal prices, f = t, load = pv, battery starting empty: zero cost,
        // and the tie-break keeps every flow at zero. (A battery starting
        // above its floor would rightly be drained to the grid instead.)
        let inst = toy_instance(
            &[20.0, 20.0, 20.0],
            &[20.0, 20.0, 20.0],
            &[1.0, 0.5, 0.7],
            &[1.0, 0.5, 0.7],
            0.0,
            battery_zero_floor(),
        );
        let s = solve(&inst).unwrap();
        assert!(s.objective_c.abs() < 1e-9);
        for h in 0..3 {
            assert_eq!(s.import_kwh[h], 0.0);
            assert_eq!(s.export_kwh[h], 0.0);
            assert_eq!(s.discharge_kwh[h], 0.0);
            assert_eq!(s.charge_kwh[h], 0.0);
        }
        assert!(matches!(first_command(&s).unwrap(), BatteryCommand::Automatic));
    }

    #[test]
    fn three_hour_peak_shift() {
        // Import for load in cheap hours 0-1 plus charge; discharge 1 kWh
        // into the expensive hour 2.
        let inst = toy_instance(
            &[10.0, 10.0, 50.0],
            &[2.0, 2.0, 2.0],
            &[1.0, 1.0, 1.0],
            &[0.0, 0.0, 0.0],
            0.0,
            battery_zero_floor(),
        );
        let s = solve(&inst).unwrap();
        let r = 1.08 / 0.92;
        let expected = 10.0 * (1.0 + 1.0 + r);
        assert!((s.objective_c - expected).abs() < 1e-6);
        assert!((s.discharge_kwh[2] - 1.0).abs() < 1e-6);
        // Total charge over the cheap hours covers the hour-2 discharge.
        let total_r: f64 = s.charge_kwh[..2].iter().sum();
        assert!((total_r - r).abs() < 1e-6);
        // The tie-break places the charge as late as possible.
        assert!(s.charge_kwh[1] > s.charge_kwh[0]);
    }

    #[test]
    fn infeasible_when_import_cap_below_load() {
        let mut inst = toy_instance(
            &[10.0],
            &[2.0],
            &[5.0],
            &[0.0],
            0.0,
            battery_zero_floor(),
        );
        inst.limits = GridLimits {
            import_kwh: 1.0,
            export_kwh: 1.0,
        };
        let s = solve(&inst).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(first_command(&s).is_err());
    }

    #[test]
    fn deterministic_schedules() {
        let inst = toy_instance(
            &[10.0, 30.0, 50.0, 8.0],
            &[5.0, 5.0, 5.0, 5.0],
            &[1.0, 0.2, 2.0, 0.4],
            &[0.3, 1.5, 0.0, 0.0],
            1.0,
            battery_zero_floor(),
        );
        let a = solve(&inst).unwrap();
        let b = solve(&inst).unwrap();
        assert_eq!(a.import_kwh, b.import_kwh);
        assert_eq!(a.export_kwh, b.export_kwh);
        assert_eq!(a.discharge_kwh, b.discharge_kwh);
        assert_eq!(a.charge_kwh, b.charge_kwh);
        assert_eq!(a.soc_kwh, b.soc_kwh);
        assert_eq!(a.objective_c.to_bits(), b.objective_c.to_bits());
    }

    #[test]
    fn zero_horizon_rejected() {
        let inst = toy_instance(&[], &[], &[], &[], 0.0, battery_zero_floor());
        assert!(matches!(solve(&inst), Err(LpError::EmptyHorizon)));
    }

    #[test]
    fn schedule_csv_shape() {
        let inst = toy_instance(
            &[10.0, 40.0],
            &[5.0, 5.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            0.0,
            battery_zero_floor(),
        );
        let s = solve(&inst).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "hour,import_kwh,export_kwh,discharge_kwh,charge_kwh,soc_kwh,command"
        );
        assert!(lines[1].contains("charge@"));
        assert!(lines[2].contains("discharge@"));
    }
}
