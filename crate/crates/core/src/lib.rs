//! Scheduling and simulation for residential solar-plus-battery systems
//! under time-of-use tariffs.
//!
//! The crate replays hourly inverter telemetry under ten dispatch
//! strategies, from "no solar at all" through rule-based automatic control
//! to a rolling 24-hour linear program fed by persistence, quantile-forest
//! or perfect forecasts, and accounts the grid cost of each.
//!
//! Start with the runnable examples (`cargo run --example simulate_strategies`)
//! or the `solarsched` binary (`simulate`, `schedule`, `forecast-eval`,
//! `report` subcommands).

pub mod automatic;
pub mod battery;
pub mod cli;
pub mod fixtures;
pub mod forecast;
pub mod lp;
pub mod metrics;
pub mod sim;
pub mod tariff;
pub mod timeseries;
