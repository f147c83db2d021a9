//! Hour-by-hour replay of a dataset under a dispatch strategy.
//!
//! Optimized strategies re-solve the 24-hour program at every weekday
//! non-peak hour from the actual state of charge, execute only the first
//! hour's command (clamped against the battery's real limits), and run the
//! automatic rules during peak hours, on weekends, and whenever the
//! strategy's forecast for the hour is unavailable. Grid flows are always
//! recomputed from the actual load and PV via the balance equation.

mod matrix;

pub use matrix::{simulate_matrix, CellResult, MatrixRequest, MatrixResult, Weighting};

use chrono::Datelike;
use thiserror::Error;

use crate::automatic::{automatic_step, HourlyFlows};
use crate::battery::{clamp_command, soc_transition, BatteryCommand, BatteryConfig, SocState};
use crate::forecast::history::HistoryForecaster;
use crate::forecast::{
    perfect, persistence_1h, persistence_24h, ForecastSet, PersistSeries, QuantileChoice,
};
use crate::lp::{build_instance, first_command, solve, GridLimits, SolveStatus};
use crate::tariff::{Period, TariffSchedule};
use crate::timeseries::{eligibility, DataError, InverterDataset};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dataset offset {dataset} min does not match tariff offset {tariff} min")]
    TimezoneMismatch { dataset: i32, tariff: i32 },
    #[error("site not eligible for optimization (mean load {mean_load_w:.0} W, mean pv {mean_pv_w:.0} W, completeness {completeness:.3}, pv/load {pv_load_ratio:.3}); pass force to simulate anyway")]
    NotEligible {
        mean_load_w: f64,
        mean_pv_w: f64,
        completeness: f64,
        pv_load_ratio: f64,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("lp error at {at}: {source}")]
    Lp {
        at: String,
        #[source]
        source: crate::lp::LpError,
    },
    #[error("forecast error at {at}: {source}")]
    Forecast {
        at: String,
        #[source]
        source: crate::forecast::ForecastError,
    },
}

/// The ten replayable dispatch strategies, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Grid supplies all load; the PV and battery do not exist.
    NoSolar,
    /// PV nets off load with no battery and no losses.
    NoBattery,
    /// The inverter's rule cascade every hour.
    Automatic,
    /// Optimized with PV persisted from 24 h earlier, load known.
    PvPersist,
    /// Optimized with both series persisted from 24 h earlier.
    PvLoadPersist,
    /// Optimized with 50th-percentile forest forecasts for both series.
    Q5050,
    /// Optimized with load persisted from 24 h earlier, PV known.
    LoadPersist,
    /// Optimized with 60th-percentile load and 40th-percentile PV.
    Q6040,
    /// Optimized with both series persisted from 1 h before each re-solve.
    Persist1h,
    /// Optimized with the actuals as the forecast.
    Perfect,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::NoSolar,
        Strategy::NoBattery,
        Strategy::Automatic,
        Strategy::PvPersist,
        Strategy::PvLoadPersist,
        Strategy::Q5050,
        Strategy::LoadPersist,
        Strategy::Q6040,
        Strategy::Persist1h,
        Strategy::Perfect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoSolar => "no-solar",
            Strategy::NoBattery => "no-battery",
            Strategy::Automatic => "automatic",
            Strategy::PvPersist => "pv-persist",
            Strategy::PvLoadPersist => "pv-load-persist",
            Strategy::Q5050 => "q50-50",
            Strategy::LoadPersist => "load-persist",
            Strategy::Q6040 => "q60-40",
            Strategy::Persist1h => "persist-1h",
            Strategy::Perfect => "perfect",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|k| {
            k.name() == s || k.name().replace('-', "_") == s
        })
    }

    /// Strategies that build and solve the dispatch program.
    pub fn is_optimized(self) -> bool {
        !matches!(
            self,
            Strategy::NoSolar | Strategy::NoBattery | Strategy::Automatic
        )
    }

    /// Strategies backed by the forest forecaster.
    pub fn uses_forest(self) -> bool {
        matches!(self, Strategy::Q5050 | Strategy::Q6040)
    }

    fn quantile_choice(self) -> QuantileChoice {
        match self {
            Strategy::Q6040 => QuantileChoice::BIASED_60_40,
            _ => QuantileChoice::MEDIAN,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which weekday hours the optimizer may command the battery in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizationWindow {
    /// Every weekday hour outside peak (shoulder included).
    #[default]
    NonPeakWeekdays,
    /// Weekday off-peak hours only (automatic during shoulder as well).
    OffPeakWeekdaysOnly,
}

impl OptimizationWindow {
    fn allows(self, period: Period) -> bool {
        match self {
            OptimizationWindow::NonPeakWeekdays => period != Period::Peak,
            OptimizationWindow::OffPeakWeekdaysOnly => period == Period::OffPeak,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub battery: BatteryConfig,
    pub limits: GridLimits,
    pub horizon_h: usize,
    pub window: OptimizationWindow,
    /// Simulate even when the eligibility gate fails.
    pub force: bool,
    /// Seed for forest training.
    pub seed: u64,
    /// Retain the per-hour trace (costly only in memory).
    pub keep_trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            battery: BatteryConfig::default(),
            limits: GridLimits::default(),
            horizon_h: 24,
            window: OptimizationWindow::default(),
            force: false,
            seed: 0,
            keep_trace: false,
        }
    }
}

/// How one simulated hour was dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HourMode {
    Baseline,
    Automatic,
    /// Automatic because the forecast for this hour was unavailable or the
    /// program was infeasible.
    Fallback,
    Charge,
    Discharge,
}

impl HourMode {
    pub fn label(self) -> &'static str {
        match self {
            HourMode::Baseline => "baseline",
            HourMode::Automatic => "automatic",
            HourMode::Fallback => "fallback",
            HourMode::Charge => "charge",
            HourMode::Discharge => "discharge",
        }
    }
}

/// One row of the hourly trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub timestamp: chrono::DateTime<chrono::FixedOffset>,
    pub mode: HourMode,
    pub load_kwh: f64,
    pub pv_kwh: f64,
    pub import_kwh: f64,
    pub export_kwh: f64,
    pub discharge_kwh: f64,
    pub charge_kwh: f64,
    pub soc_end_kwh: f64,
    pub cost_c: f64,
}

/// Cost accounting for one (dataset, tariff, strategy) run.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub total_cost_c: f64,
    pub total_load_kwh: f64,
    /// total_cost_c / total_load_kwh (zero when no load was simulated).
    pub cost_c_per_kwh: f64,
    pub hours_simulated: usize,
    pub hours_automatic_fallback: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub report: CostReport,
    pub trace: Vec<TraceRow>,
}

/// Grid cost of one hour in cents: import at the tariff rate minus export
/// at the feed-in rate.
pub fn hour_cost(import_rate_c: f64, export_rate_c: f64, flows: &HourlyFlows) -> f64 {
    import_rate_c * flows.import_kwh - export_rate_c * flows.export_kwh
}

/// Replay `ds` under `strategy` and account grid cost per hour.
///
/// Gap hours are skipped entirely: the battery idles and nothing is billed.
/// The battery starts at its configured minimum.
pub fn simulate(
    ds: &InverterDataset,
    tariff: &TariffSchedule,
    strategy: Strategy,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    let forecaster = if strategy.uses_forest() {
        Some(HistoryForecaster::train(ds, opts.seed))
    } else {
        None
    };
    simulate_with_forecaster(ds, tariff, strategy, opts, forecaster.as_ref())
}

/// [`simulate`] with an externally trained forecaster, so matrix runs can
/// train once per dataset and share it across tariffs and strategies.
pub fn simulate_with_forecaster(
    ds: &InverterDataset,
    tariff: &TariffSchedule,
    strategy: Strategy,
    opts: &SimOptions,
    forecaster: Option<&HistoryForecaster>,
) -> Result<SimResult, SimError> {
    if let Some(tz) = tariff.timezone_offset_minutes {
        if tz != ds.utc_offset_minutes {
            return Err(SimError::TimezoneMismatch {
                dataset: ds.utc_offset_minutes,
                tariff: tz,
            });
        }
    }
    if !opts.force {
        let report = eligibility(ds)?;
        if !report.eligible {
            return Err(SimError::NotEligible {
                mean_load_w: report.mean_load_w,
                mean_pv_w: report.mean_pv_w,
                completeness: report.completeness,
                pv_load_ratio: report.pv_load_ratio,
            });
        }
    }
    let trained;
    let forecaster = if strategy.uses_forest() && forecaster.is_none() {
        trained = HistoryForecaster::train(ds, opts.seed);
        Some(&trained)
    } else {
        forecaster
    };

    let battery = opts.battery;
    let mut soc = SocState::new(&battery, battery.soc_min_kwh)
        .expect("soc_min is always a valid state");
    let mut total_cost_c = 0.0;
    let mut total_load_kwh = 0.0;
    let mut hours_simulated = 0usize;
    let mut hours_automatic_fallback = 0usize;
    let mut trace = Vec::new();

    for rec in ds.records() {
        if !rec.present {
            continue; // battery idles through gaps
        }
        let t = rec.timestamp;
        let rates = tariff.rates_at(t);
        // The no-solar counterfactual removes the panels from the system.
        let pv_kwh = if strategy == Strategy::NoSolar {
            0.0
        } else {
            rec.pv_kwh
        };
        let (flows, mode) = dispatch_hour(
            ds,
            tariff,
            strategy,
            opts,
            forecaster,
            soc,
            t,
            rec.load_kwh,
            pv_kwh,
            rates.period,
        )?;

        debug_assert!(
            ((rec.load_kwh - pv_kwh)
                - (flows.battery_flow_kwh() + flows.import_kwh - flows.export_kwh))
                .abs()
                < 1e-9
        );

        let cost = hour_cost(
            rates.import.as_c_per_kwh(),
            rates.export.as_c_per_kwh(),
            &flows,
        );
        total_cost_c += cost;
        total_load_kwh += rec.load_kwh;
        hours_simulated += 1;
        if mode == HourMode::Fallback {
            hours_automatic_fallback += 1;
        }
        soc = flows.soc_end;
        if opts.keep_trace {
            trace.push(TraceRow {
                timestamp: t,
                mode,
                load_kwh: rec.load_kwh,
                pv_kwh,
                import_kwh: flows.import_kwh,
                export_kwh: flows.export_kwh,
                discharge_kwh: flows.discharge_kwh,
                charge_kwh: flows.charge_kwh,
                soc_end_kwh: flows.soc_end.kwh(),
                cost_c: cost,
            });
        }
    }

    let cost_c_per_kwh = if total_load_kwh > 0.0 {
        total_cost_c / total_load_kwh
    } else {
        0.0
    };
    Ok(SimResult {
        report: CostReport {
            total_cost_c,
            total_load_kwh,
            cost_c_per_kwh,
            hours_simulated,
            hours_automatic_fallback,
        },
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn dispatch_hour(
    ds: &InverterDataset,
    tariff: &TariffSchedule,
    strategy: Strategy,
    opts: &SimOptions,
    forecaster: Option<&HistoryForecaster>,
    soc: SocState,
    t: chrono::DateTime<chrono::FixedOffset>,
    load_kwh: f64,
    pv_kwh: f64,
    period: Period,
) -> Result<(HourlyFlows, HourMode), SimError> {
    let battery = &opts.battery;
    match strategy {
        Strategy::NoSolar => {
            // No system at all: everything imports, SoC untouched.
            Ok((
                HourlyFlows {
                    import_kwh: load_kwh,
                    export_kwh: 0.0,
                    discharge_kwh: 0.0,
                    charge_kwh: 0.0,
                    soc_end: soc,
                },
                HourMode::Baseline,
            ))
        }
        Strategy::NoBattery => {
            let net = load_kwh - pv_kwh;
            Ok((
                HourlyFlows {
                    import_kwh: net.max(0.0),
                    export_kwh: (-net).max(0.0),
                    discharge_kwh: 0.0,
                    charge_kwh: 0.0,
                    soc_end: soc,
                },
                HourMode::Baseline,
            ))
        }
        Strategy::Automatic => Ok((
            automatic_step(battery, soc, load_kwh, pv_kwh),
            HourMode::Automatic,
        )),
        _ => {
            let weekday = t.weekday().num_days_from_monday() < 5;
            if !(weekday && opts.window.allows(period)) {
                return Ok((
                    automatic_step(battery, soc, load_kwh, pv_kwh),
                    HourMode::Automatic,
                ));
            }
            let fc = strategy_forecast(ds, strategy, forecaster, t, opts.horizon_h)
                .map_err(|source| SimError::Forecast {
                    at: t.to_rfc3339(),
                    source,
                })?;
            if !fc.available[0] {
                return Ok((
                    automatic_step(battery, soc, load_kwh, pv_kwh),
                    HourMode::Fallback,
                ));
            }
            let inst = build_instance(
                tariff,
                &fc,
                t,
                soc,
                battery,
                opts.limits,
                strategy.quantile_choice(),
                opts.horizon_h,
            )
            .map_err(|source| SimError::Lp {
                at: t.to_rfc3339(),
                source,
            })?;
            let schedule = solve(&inst).map_err(|source| SimError::Lp {
                at: t.to_rfc3339(),
                source,
            })?;
            if schedule.status != SolveStatus::Optimal {
                return Ok((
                    automatic_step(battery, soc, load_kwh, pv_kwh),
                    HourMode::Fallback,
                ));
            }
            let cmd = first_command(&schedule).map_err(|source| SimError::Lp {
                at: t.to_rfc3339(),
                source,
            })?;
            Ok(execute_command(battery, soc, cmd, load_kwh, pv_kwh))
        }
    }
}

/// Execute a battery command against the actual load and PV: the battery
/// flow is clamped to the real SoC limits and the grid absorbs the
/// remainder of the balance equation.
fn execute_command(
    battery: &BatteryConfig,
    soc: SocState,
    cmd: BatteryCommand,
    load_kwh: f64,
    pv_kwh: f64,
) -> (HourlyFlows, HourMode) {
    match cmd {
        BatteryCommand::Automatic => (
            automatic_step(battery, soc, load_kwh, pv_kwh),
            HourMode::Automatic,
        ),
        BatteryCommand::Charge(_) | BatteryCommand::Discharge(_) => {
            let (q, r) = clamp_command(battery, soc, cmd);
            let soc_end = soc_transition(battery, soc, q, r)
                .expect("clamped command stays in bounds");
            let grid_net = load_kwh - pv_kwh - (q - r);
            let mode = if matches!(cmd, BatteryCommand::Charge(_)) {
                HourMode::Charge
            } else {
                HourMode::Discharge
            };
            (
                HourlyFlows {
                    import_kwh: grid_net.max(0.0),
                    export_kwh: (-grid_net).max(0.0),
                    discharge_kwh: q,
                    charge_kwh: r,
                    soc_end,
                },
                mode,
            )
        }
    }
}

fn strategy_forecast(
    ds: &InverterDataset,
    strategy: Strategy,
    forecaster: Option<&HistoryForecaster>,
    start: chrono::DateTime<chrono::FixedOffset>,
    horizon_h: usize,
) -> Result<ForecastSet, crate::forecast::ForecastError> {
    match strategy {
        Strategy::PvPersist => persistence_24h(ds, start, horizon_h, PersistSeries::Pv),
        Strategy::PvLoadPersist => persistence_24h(ds, start, horizon_h, PersistSeries::Both),
        Strategy::LoadPersist => persistence_24h(ds, start, horizon_h, PersistSeries::Load),
        Strategy::Persist1h => persistence_1h(ds, start, horizon_h),
        Strategy::Perfect => perfect(ds, start, horizon_h),
        Strategy::Q5050 | Strategy::Q6040 => match forecaster {
            Some(f) => f.forecast(start, horizon_h),
            None => unreachable!("forest strategies always carry a forecaster"),
        },
        _ => unreachable!("baseline strategies never request forecasts"),
    }
}

/// Serialize a trace as CSV.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(
        "timestamp,mode,load_kwh,pv_kwh,import_kwh,export_kwh,discharge_kwh,charge_kwh,soc_kwh,cost_c\n",
    );
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.timestamp.to_rfc3339(),
            row.mode.label(),
            row.load_kwh,
            row.pv_kwh,
            row.import_kwh,
            row.export_kwh,
            row.discharge_kwh,
            row.charge_kwh,
            row.soc_end_kwh,
            row.cost_c
        ));
    }
    out
}
