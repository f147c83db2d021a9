//! Time-of-use tariff engine: maps any local timestamp to a billing period
//! and import/export prices.
//!
//! Tariffs are declared in TOML. Rules are evaluated in order with first
//! match winning; the optional `default` period covers everything the rules
//! do not. Hour windows are half-open `[start, end)`, so a "7am to 11pm"
//! window contains 07:00 through 22:00 and excludes 23:00. Prices are held
//! internally as integer tenths of a cent per kWh so printed rates compare
//! exactly.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Datelike, FixedOffset, Timelike, Weekday};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TariffError {
    #[error("tariff config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("negative price {0} c/kWh")]
    NegativePrice(f64),
    #[error("price {0} has more than one decimal place; rates are quoted in tenths of a cent")]
    PricePrecision(f64),
    #[error("rule {index}: start hour {start} must be less than end hour {end}")]
    BadWindow { index: usize, start: u8, end: u8 },
    #[error("rule {index}: hour out of range (start 0..=23, end 1..=24)")]
    HourRange { index: usize },
    #[error("rule {index}: empty day set")]
    EmptyDays { index: usize },
    #[error("rule {index}: unknown day {day:?}")]
    UnknownDay { index: usize, day: String },
    #[error("unknown period name {0:?}")]
    UnknownPeriod(String),
    #[error("{count} hours of the week are uncovered and no default period is set")]
    UncoveredHours { count: usize },
    #[error("period {0} is used but has no rate")]
    MissingRate(Period),
    #[error("unknown bundled tariff {0:?}")]
    UnknownBundled(String),
}

/// Billing period classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Period {
    OffPeak,
    Shoulder,
    Peak,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::OffPeak => write!(f, "off-peak"),
            Period::Shoulder => write!(f, "shoulder"),
            Period::Peak => write!(f, "peak"),
        }
    }
}

/// Price in tenths of a cent per kWh (43.6 c/kWh is stored as 436).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Price(i64);

impl Price {
    /// Parse a price quoted in c/kWh. At most one decimal place is allowed.
    pub fn from_c_per_kwh(c: f64) -> Result<Self, TariffError> {
        if c < 0.0 {
            return Err(TariffError::NegativePrice(c));
        }
        let tenths = c * 10.0;
        let rounded = tenths.round();
        if (tenths - rounded).abs() > 1e-6 {
            return Err(TariffError::PricePrecision(c));
        }
        Ok(Price(rounded as i64))
    }

    pub fn tenths(self) -> i64 {
        self.0
    }

    pub fn as_c_per_kwh(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 10 == 0 {
            write!(f, "{}", self.0 / 10)
        } else {
            write!(f, "{}.{}", self.0 / 10, (self.0 % 10).abs())
        }
    }
}

/// One ordered matching rule: period applies on `days` for hours
/// `[start_hour, end_hour)`.
#[derive(Debug, Clone)]
pub struct PeriodRule {
    pub period: Period,
    pub days: Vec<Weekday>,
    pub start_hour: u8,
    pub end_hour: u8,
}

impl PeriodRule {
    fn matches(&self, weekday: Weekday, hour: u8) -> bool {
        self.days.contains(&weekday) && hour >= self.start_hour && hour < self.end_hour
    }
}

/// A complete tariff: per-period import rates, a flat feed-in rate, and the
/// ordered rules assigning each hour of the week to a period.
#[derive(Debug, Clone)]
pub struct TariffSchedule {
    pub name: String,
    pub feed_in: Price,
    rates: BTreeMap<Period, Price>,
    rules: Vec<PeriodRule>,
    default_period: Option<Period>,
    /// Optional declared UTC offset (minutes); simulations check it against
    /// the dataset offset when present.
    pub timezone_offset_minutes: Option<i32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTariff {
    name: String,
    feed_in: f64,
    default: Option<String>,
    timezone_offset_minutes: Option<i32>,
    rates: RawRates,
    #[serde(default)]
    rules: Vec<RawRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    offpeak: Option<f64>,
    shoulder: Option<f64>,
    peak: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    period: String,
    days: DaysSpec,
    start: u8,
    end: u8,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DaysSpec {
    Named(String),
    List(Vec<String>),
}

fn parse_period(s: &str) -> Option<Period> {
    match s.to_ascii_lowercase().as_str() {
        "offpeak" | "off-peak" | "off_peak" => Some(Period::OffPeak),
        "shoulder" => Some(Period::Shoulder),
        "peak" => Some(Period::Peak),
        _ => None,
    }
}

fn parse_day(s: &str) -> Option<Weekday> {
    match s.to_ascii_lowercase().as_str() {
        "mon" | "monday" => Some(Weekday::Mon),
        "tue" | "tuesday" => Some(Weekday::Tue),
        "wed" | "wednesday" => Some(Weekday::Wed),
        "thu" | "thursday" => Some(Weekday::Thu),
        "fri" | "friday" => Some(Weekday::Fri),
        "sat" | "saturday" => Some(Weekday::Sat),
        "sun" | "sunday" => Some(Weekday::Sun),
        _ => None,
    }
}

const WEEKDAYS: [Weekday; 5] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
];
const ALL_DAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// Parse a tariff TOML document into a validated schedule.
pub fn parse_tariff(config: &str) -> Result<TariffSchedule, TariffError> {
    let raw: RawTariff = toml::from_str(config)?;

    let mut rates = BTreeMap::new();
    if let Some(c) = raw.rates.offpeak {
        rates.insert(Period::OffPeak, Price::from_c_per_kwh(c)?);
    }
    if let Some(c) = raw.rates.shoulder {
        rates.insert(Period::Shoulder, Price::from_c_per_kwh(c)?);
    }
    if let Some(c) = raw.rates.peak {
        rates.insert(Period::Peak, Price::from_c_per_kwh(c)?);
    }
    let feed_in = Price::from_c_per_kwh(raw.feed_in)?;

    let mut rules = Vec::with_capacity(raw.rules.len());
    for (index, r) in raw.rules.iter().enumerate() {
        let period =
            parse_period(&r.period).ok_or_else(|| TariffError::UnknownPeriod(r.period.clone()))?;
        let days = match &r.days {
            DaysSpec::Named(s) => match s.to_ascii_lowercase().as_str() {
                "weekdays" => WEEKDAYS.to_vec(),
                "weekends" => vec![Weekday::Sat, Weekday::Sun],
                "all" => ALL_DAYS.to_vec(),
                other => vec![parse_day(other).ok_or_else(|| TariffError::UnknownDay {
                    index,
                    day: s.clone(),
                })?],
            },
            DaysSpec::List(list) => {
                let mut days = Vec::with_capacity(list.len());
                for d in list {
                    days.push(parse_day(d).ok_or_else(|| TariffError::UnknownDay {
                        index,
                        day: d.clone(),
                    })?);
                }
                days
            }
        };
        if days.is_empty() {
            return Err(TariffError::EmptyDays { index });
        }
        if r.start > 23 || r.end > 24 || r.end == 0 {
            return Err(TariffError::HourRange { index });
        }
        if r.start >= r.end {
            return Err(TariffError::BadWindow {
                index,
                start: r.start,
                end: r.end,
            });
        }
        rules.push(PeriodRule {
            period,
            days,
            start_hour: r.start,
            end_hour: r.end,
        });
    }

    let default_period = match &raw.default {
        Some(s) => Some(parse_period(s).ok_or_else(|| TariffError::UnknownPeriod(s.clone()))?),
        None => None,
    };

    let schedule = TariffSchedule {
        name: raw.name,
        feed_in,
        rates,
        rules,
        default_period,
        timezone_offset_minutes: raw.timezone_offset_minutes,
    };

    // Totality: every hour of the week must resolve to a period with a rate.
    let mut uncovered = 0usize;
    for day in ALL_DAYS {
        for hour in 0..24u8 {
            match schedule.period_for(day, hour) {
                Some(p) => {
                    if !schedule.rates.contains_key(&p) {
                        return Err(TariffError::MissingRate(p));
                    }
                }
                None => uncovered += 1,
            }
        }
    }
    if uncovered > 0 {
        return Err(TariffError::UncoveredHours { count: uncovered });
    }

    Ok(schedule)
}

impl TariffSchedule {
    fn period_for(&self, weekday: Weekday, hour: u8) -> Option<Period> {
        self.rules
            .iter()
            .find(|r| r.matches(weekday, hour))
            .map(|r| r.period)
            .or(self.default_period)
    }

    /// Period and prices in effect at a local timestamp.
    pub fn rates_at(&self, t: DateTime<FixedOffset>) -> RateInfo {
        let period = self
            .period_for(t.weekday(), t.hour() as u8)
            .expect("parse_tariff guarantees totality");
        RateInfo {
            period,
            import: self.rates[&period],
            export: self.feed_in,
        }
    }

    pub fn rate_for_period(&self, period: Period) -> Option<Price> {
        self.rates.get(&period).copied()
    }

    /// True if any hour of the week is classified as peak.
    pub fn has_peak_hours(&self) -> bool {
        ALL_DAYS
            .iter()
            .any(|&d| (0..24u8).any(|h| self.period_for(d, h) == Some(Period::Peak)))
    }

    /// Sum of the weekly (peak + shoulder) hourly prices divided by the sum
    /// of the weekly off-peak hourly prices. Infinite if nothing is off-peak.
    pub fn peak_shoulder_to_offpeak_ratio(&self) -> f64 {
        let mut peak_shoulder = 0i64;
        let mut offpeak = 0i64;
        for day in ALL_DAYS {
            for hour in 0..24u8 {
                let p = self.period_for(day, hour).unwrap();
                let rate = self.rates[&p].tenths();
                match p {
                    Period::OffPeak => offpeak += rate,
                    _ => peak_shoulder += rate,
                }
            }
        }
        peak_shoulder as f64 / offpeak as f64
    }
}

/// Result of a tariff lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateInfo {
    pub period: Period,
    pub import: Price,
    pub export: Price,
}

/// Bundled tariff fixtures, one per published description row.
pub const BUNDLED_TARIFFS: [(&str, &str); 11] = [
    ("tariff1", include_str!("../fixtures/tariffs/tariff1.toml")),
    ("tariff2", include_str!("../fixtures/tariffs/tariff2.toml")),
    ("tariff3", include_str!("../fixtures/tariffs/tariff3.toml")),
    ("tariff4", include_str!("../fixtures/tariffs/tariff4.toml")),
    ("tariff5", include_str!("../fixtures/tariffs/tariff5.toml")),
    ("tariff6", include_str!("../fixtures/tariffs/tariff6.toml")),
    ("tariff7", include_str!("../fixtures/tariffs/tariff7.toml")),
    ("tariff8", include_str!("../fixtures/tariffs/tariff8.toml")),
    ("tariff9", include_str!("../fixtures/tariffs/tariff9.toml")),
    ("tariff10", include_str!("../fixtures/tariffs/tariff10.toml")),
    ("flat", include_str!("../fixtures/tariffs/flat.toml")),
];

/// Look up a bundled tariff by name.
pub fn bundled(name: &str) -> Result<TariffSchedule, TariffError> {
    BUNDLED_TARIFFS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| TariffError::UnknownBundled(name.to_string()))
        .and_then(|(_, text)| parse_tariff(text))
}

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED_TARIFFS.iter().map(|(n, _)| *n).collect()
}
