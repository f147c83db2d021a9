//! Command-line entry points: `simulate`, `schedule`, `forecast-eval` and
//! `report`. The binary is a thin shell over the library; everything here
//! is argument plumbing and file IO.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::DateTime;
use clap::{Args, Parser, Subcommand};

use crate::battery::{BatteryConfig, SocState};
use crate::forecast::eval::{evaluate, EvalModel, SiteEval};
use crate::forecast::features::load_nwp_csv;
use crate::forecast::{ForecastSet, Quantile, QuantileChoice, QuantileTriple};
use crate::lp::{build_instance, solve, GridLimits, SolveStatus};
use crate::metrics::percentile_table;
use crate::sim::{
    simulate_matrix, MatrixRequest, OptimizationWindow, SimOptions, Strategy, Weighting,
};
use crate::tariff::{bundled, bundled_names, parse_tariff, TariffSchedule};
use crate::timeseries::{load_dataset, InverterDataset};

#[derive(Debug, Parser)]
#[command(
    name = "solarsched",
    version,
    about = "Schedule and simulate a residential solar-plus-battery system against time-of-use tariffs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay datasets under dispatch strategies and write cost reports.
    Simulate(SimulateArgs),
    /// Solve one 24-hour schedule from a forecast CSV and print it.
    Schedule(ScheduleArgs),
    /// Score forecasting approaches and print the error percentile table.
    ForecastEval(ForecastEvalArgs),
    /// Derive plot-ready files from a simulate run.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct BatteryArgs {
    /// Battery capacity, kWh.
    #[arg(long, default_value_t = 6.5)]
    pub capacity: f64,
    /// Minimum state of charge, kWh.
    #[arg(long, default_value_t = 1.3)]
    pub soc_min: f64,
    /// Maximum state of charge, kWh.
    #[arg(long, default_value_t = 6.5)]
    pub soc_max: f64,
    /// Charge/discharge limit, kWh per hour.
    #[arg(long, default_value_t = 4.6)]
    pub rate_limit: f64,
    /// Per-direction loss factor.
    #[arg(long, default_value_t = 0.08)]
    pub loss_factor: f64,
}

impl BatteryArgs {
    fn build(&self) -> Result<BatteryConfig> {
        BatteryConfig::new(
            self.capacity,
            self.soc_min,
            self.soc_max,
            self.rate_limit,
            self.loss_factor,
        )
        .map_err(Into::into)
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| {
        format!(
            "unknown strategy {s:?}; expected one of: {}",
            Strategy::ALL.map(|k| k.name()).join(", ")
        )
    })
}

fn parse_eval_model(s: &str) -> Result<EvalModel, String> {
    EvalModel::parse(s)
        .ok_or_else(|| format!("unknown model {s:?}; expected qrf, persist-24h, persist-1h or perfect"))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Site CSV files (timestamp,load_kwh,pv_kwh).
    #[arg(long = "data", required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Tariffs: bundled names (tariff1..tariff10, flat) or TOML paths.
    #[arg(long = "tariff", required = true, num_args = 1..)]
    pub tariffs: Vec<String>,
    /// Strategies to simulate.
    #[arg(long, value_delimiter = ',', default_values_t = Strategy::ALL, value_parser = parse_strategy)]
    pub strategies: Vec<Strategy>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// UTC offset of the dataset timestamps, minutes.
    #[arg(long, default_value_t = 600)]
    pub utc_offset_minutes: i32,
    #[command(flatten)]
    pub battery: BatteryArgs,
    /// Simulate sites that fail the eligibility gate.
    #[arg(long)]
    pub force: bool,
    /// Mean cost per kWh across sites instead of load-weighted.
    #[arg(long)]
    pub unweighted: bool,
    /// Run the optimizer in weekday off-peak hours only.
    #[arg(long)]
    pub offpeak_only: bool,
    /// Write a per-hour trace CSV for every cell.
    #[arg(long)]
    pub trace: bool,
    /// Seed for forest training.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for the matrix runner.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Tariff: bundled name or TOML path.
    #[arg(long)]
    pub tariff: String,
    /// Forecast CSV (timestamp,series,q40,q50,q60).
    #[arg(long)]
    pub forecast: PathBuf,
    /// Current state of charge, kWh (defaults to the SoC floor).
    #[arg(long)]
    pub soc: Option<f64>,
    /// Quantile bias: "50-50" or "60-40".
    #[arg(long, default_value = "50-50")]
    pub quantiles: String,
    /// Horizon, hours.
    #[arg(long, default_value_t = 24)]
    pub horizon: usize,
    /// UTC offset of the forecast timestamps, minutes.
    #[arg(long, default_value_t = 600)]
    pub utc_offset_minutes: i32,
    #[command(flatten)]
    pub battery: BatteryArgs,
}

#[derive(Debug, Args)]
pub struct ForecastEvalArgs {
    /// Site CSV files.
    #[arg(long = "data", required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Optional pre-extracted NWP CSV shared by all sites.
    #[arg(long)]
    pub nwp: Option<PathBuf>,
    /// Model to score: qrf, persist-24h, persist-1h, perfect.
    #[arg(long, default_value = "qrf", value_parser = parse_eval_model)]
    pub model: EvalModel,
    /// UTC offset of the dataset timestamps, minutes.
    #[arg(long, default_value_t = 600)]
    pub utc_offset_minutes: i32,
    /// Seed for forest training.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// site_costs.csv from a simulate run.
    #[arg(long)]
    pub site_costs: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Strategy whose cost goes in the ratio plot.
    #[arg(long, default_value_t = Strategy::Perfect, value_parser = parse_strategy)]
    pub cost_strategy: Strategy,
    /// Strategy whose savings go in the tariff plot.
    #[arg(long, default_value_t = Strategy::Q6040, value_parser = parse_strategy)]
    pub savings_strategy: Strategy,
}

/// Dispatch a parsed command line. Errors map to exit code 1 in `main`.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Schedule(args) => cmd_schedule(args),
        Command::ForecastEval(args) => cmd_forecast_eval(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// Resolve a tariff argument: bundled name first, then a TOML path.
pub fn resolve_tariff(spec: &str) -> Result<TariffSchedule> {
    if let Ok(t) = bundled(spec) {
        return Ok(t);
    }
    let path = Path::new(spec);
    if path.exists() {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading tariff file {}", path.display()))?;
        return parse_tariff(&text).map_err(Into::into);
    }
    bail!(
        "unknown tariff {spec:?}: not a bundled name ({}) and not a file",
        bundled_names().join(", ")
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    if let Some(jobs) = args.jobs {
        // Ignore failure: the global pool can only be initialized once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let datasets: Vec<InverterDataset> = args
        .data
        .iter()
        .map(|p| {
            load_dataset(p, args.utc_offset_minutes)
                .with_context(|| format!("loading dataset {}", p.display()))
        })
        .collect::<Result<_>>()?;
    let tariffs: Vec<TariffSchedule> = args
        .tariffs
        .iter()
        .map(|s| resolve_tariff(s))
        .collect::<Result<_>>()?;

    let opts = SimOptions {
        battery: args.battery.build()?,
        limits: GridLimits::default(),
        horizon_h: 24,
        window: if args.offpeak_only {
            OptimizationWindow::OffPeakWeekdaysOnly
        } else {
            OptimizationWindow::NonPeakWeekdays
        },
        force: args.force,
        seed: args.seed,
        keep_trace: args.trace,
    };
    let req = MatrixRequest {
        datasets: &datasets,
        tariffs: &tariffs,
        strategies: &args.strategies,
        opts: opts.clone(),
        weighting: if args.unweighted {
            Weighting::Unweighted
        } else {
            Weighting::LoadWeighted
        },
    };
    let result = simulate_matrix(&req)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    fs::write(args.out.join("costs.csv"), result.costs_csv())?;
    fs::write(args.out.join("savecounts.csv"), result.savecounts_csv())?;
    fs::write(args.out.join("site_costs.csv"), result.site_costs_csv())?;

    if args.trace {
        for ds in &datasets {
            for tariff in &tariffs {
                for &strategy in &args.strategies {
                    let sim = crate::sim::simulate(ds, tariff, strategy, &opts)?;
                    let name = format!(
                        "trace_{}_{}_{}.csv",
                        ds.site_id,
                        tariff.name,
                        strategy.name()
                    );
                    fs::write(args.out.join(name), crate::sim::trace_to_csv(&sim.trace))?;
                }
            }
        }
    }

    println!("{}", result.costs_csv().trim_end());
    eprintln!(
        "wrote costs.csv, savecounts.csv, site_costs.csv to {}",
        args.out.display()
    );
    Ok(())
}

/// Parse the `timestamp,series,q40,q50,q60` forecast CSV.
pub fn load_forecast_csv(path: &Path, utc_offset_minutes: i32) -> Result<ForecastSet> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading forecast file {}", path.display()))?;
    let mut load: BTreeMap<DateTime<chrono::FixedOffset>, QuantileTriple> = BTreeMap::new();
    let mut pv: BTreeMap<DateTime<chrono::FixedOffset>, QuantileTriple> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "timestamp,series,q40,q50,q60" {
                bail!("line 1: expected header timestamp,series,q40,q50,q60");
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("line {}: expected 5 fields, got {}", i + 1, fields.len());
        }
        let ts = DateTime::parse_from_rfc3339(fields[0])
            .map_err(|e| anyhow!("line {}: bad timestamp: {e}", i + 1))?;
        if ts.offset().local_minus_utc() != utc_offset_minutes * 60 {
            bail!("line {}: timestamp offset does not match --utc-offset-minutes", i + 1);
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| anyhow!("line {}: bad number {s:?}", i + 1))
        };
        let triple = QuantileTriple {
            q40: num(fields[2])?,
            q50: num(fields[3])?,
            q60: num(fields[4])?,
        };
        match fields[1].trim() {
            "load" => load.insert(ts, triple),
            "pv" => pv.insert(ts, triple),
            other => bail!("line {}: unknown series {other:?}", i + 1),
        };
    }
    let start = *load
        .keys()
        .next()
        .ok_or_else(|| anyhow!("forecast file has no load rows"))?;
    let horizon = load.len();
    if pv.len() != horizon {
        bail!("load and pv cover different hour counts ({} vs {})", horizon, pv.len());
    }
    let mut load_q = Vec::with_capacity(horizon);
    let mut pv_q = Vec::with_capacity(horizon);
    for i in 0..horizon {
        let t = start + chrono::Duration::hours(i as i64);
        let l = load
            .get(&t)
            .ok_or_else(|| anyhow!("missing load row for {t}"))?;
        let p = pv.get(&t).ok_or_else(|| anyhow!("missing pv row for {t}"))?;
        load_q.push(*l);
        pv_q.push(*p);
    }
    ForecastSet::new(start, load_q, pv_q, vec![true; horizon]).map_err(Into::into)
}

fn cmd_schedule(args: ScheduleArgs) -> Result<()> {
    let tariff = resolve_tariff(&args.tariff)?;
    let battery = args.battery.build()?;
    let forecast = load_forecast_csv(&args.forecast, args.utc_offset_minutes)?;
    if forecast.horizon_h < args.horizon {
        bail!(
            "forecast covers {} hours, need {}",
            forecast.horizon_h,
            args.horizon
        );
    }
    let choice = match args.quantiles.as_str() {
        "50-50" => QuantileChoice::MEDIAN,
        "60-40" => QuantileChoice::BIASED_60_40,
        "40-60" => QuantileChoice {
            load: Quantile::Q40,
            pv: Quantile::Q60,
        },
        other => bail!("unknown quantile bias {other:?}; expected 50-50, 60-40 or 40-60"),
    };
    let soc = SocState::new(&battery, args.soc.unwrap_or(battery.soc_min_kwh))?;
    let inst = build_instance(
        &tariff,
        &forecast,
        forecast.start,
        soc,
        &battery,
        GridLimits::default(),
        choice,
        args.horizon,
    )?;
    let schedule = solve(&inst)?;
    if schedule.status != SolveStatus::Optimal {
        bail!(
            "schedule is infeasible: check grid limits against the forecast (peak net load {:.3} kWh)",
            inst.load_kwh
                .iter()
                .zip(&inst.pv_kwh)
                .map(|(l, p)| l - p)
                .fold(f64::MIN, f64::max)
        );
    }
    print!("{}", schedule.to_csv());
    Ok(())
}

fn cmd_forecast_eval(args: ForecastEvalArgs) -> Result<()> {
    let nwp = match &args.nwp {
        Some(path) => Some(load_nwp_csv(path, args.utc_offset_minutes)?),
        None => None,
    };
    let mut load_reports = Vec::new();
    let mut pv_reports = Vec::new();
    for path in &args.data {
        let ds = load_dataset(path, args.utc_offset_minutes)
            .with_context(|| format!("loading dataset {}", path.display()))?;
        let SiteEval { load, pv } = evaluate(&ds, args.model, nwp.as_ref(), args.seed)
            .with_context(|| format!("evaluating {}", ds.site_id))?;
        load_reports.push(load);
        pv_reports.push(pv);
    }
    let table = percentile_table(&load_reports, &pv_reports);
    let mut out = String::from("percentile,load_nmae,load_nrmse,pv_nmae,pv_nrmse\n");
    for (p, cols) in table {
        out.push_str(&format!(
            "{p},{:.6},{:.6},{:.6},{:.6}\n",
            cols[0], cols[1], cols[2], cols[3]
        ));
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct SiteCostRow {
    tariff: String,
    strategy: String,
    cost_c: f64,
    cost_c_per_kwh: f64,
    pv_load_ratio: f64,
}

fn read_site_costs(path: &Path) -> Result<Vec<SiteCostRow>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            bail!("line {}: expected 9 fields in site_costs.csv", i + 1);
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| anyhow!("line {}: bad number {s:?}", i + 1))
        };
        rows.push(SiteCostRow {
            tariff: f[1].to_string(),
            strategy: f[2].to_string(),
            cost_c: num(f[3])?,
            cost_c_per_kwh: num(f[5])?,
            pv_load_ratio: num(f[8])?,
        });
    }
    Ok(rows)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let rows = read_site_costs(&args.site_costs)?;
    if rows.is_empty() {
        bail!("{} has no data rows", args.site_costs.display());
    }
    fs::create_dir_all(&args.out)?;

    // PV/load ratio vs per-kWh cost, one point per site, first tariff found.
    let first_tariff = rows[0].tariff.clone();
    let mut ratio_rows: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.tariff == first_tariff && r.strategy == args.cost_strategy.name())
        .map(|r| (r.pv_load_ratio, r.cost_c_per_kwh))
        .collect();
    ratio_rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = String::from("pv_load_ratio,cost_c_per_kwh\n");
    for (x, y) in &ratio_rows {
        out.push_str(&format!("{x:.6},{y:.6}\n"));
    }
    fs::write(args.out.join("ratio_vs_cost.csv"), out)?;

    // Savings over automatic vs (feed-in + peak-plus-shoulder/off-peak price
    // ratio), one point per tariff. Tariffs must be bundled names or TOML
    // paths so the price ratio can be recomputed.
    let mut tariff_names: Vec<String> = rows.iter().map(|r| r.tariff.clone()).collect();
    tariff_names.sort();
    tariff_names.dedup();
    let mut out = String::from("feed_in_plus_price_ratio,savings_pct\n");
    let mut points = Vec::new();
    for name in &tariff_names {
        let Ok(tariff) = resolve_tariff(name) else {
            eprintln!("skipping tariff {name:?}: cannot resolve to recompute prices");
            continue;
        };
        let auto_cost: f64 = rows
            .iter()
            .filter(|r| &r.tariff == name && r.strategy == "automatic")
            .map(|r| r.cost_c)
            .sum();
        let strat_cost: f64 = rows
            .iter()
            .filter(|r| &r.tariff == name && r.strategy == args.savings_strategy.name())
            .map(|r| r.cost_c)
            .sum();
        if auto_cost <= 0.0 {
            continue;
        }
        let x = tariff.feed_in.as_c_per_kwh() + tariff.peak_shoulder_to_offpeak_ratio();
        let y = (auto_cost - strat_cost) / auto_cost * 100.0;
        points.push((x, y));
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (x, y) in points {
        out.push_str(&format!("{x:.6},{y:.6}\n"));
    }
    fs::write(args.out.join("savings_vs_price_ratio.csv"), out)?;

    eprintln!(
        "wrote ratio_vs_cost.csv and savings_vs_price_ratio.csv to {}",
        args.out.display()
    );
    Ok(())
}
