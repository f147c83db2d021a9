//! Load and PV forecasting: persistence baselines, a perfect oracle, and a
//! quantile regression forest, all emitting per-hour 40/50/60th-percentile
//! forecasts.

pub mod eval;
pub mod features;
pub mod history;
pub mod qrf;

use chrono::{DateTime, Duration, FixedOffset};
use thiserror::Error;

use crate::timeseries::InverterDataset;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("horizon must be at least 1 hour")]
    EmptyHorizon,
    #[error("quantiles out of order at hour {hour}: {q40} / {q50} / {q60}")]
    QuantilesOutOfOrder {
        hour: usize,
        q40: f64,
        q50: f64,
        q60: f64,
    },
    #[error("negative forecast value at hour {0}")]
    NegativeValue(usize),
    #[error("series length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("training table is empty")]
    EmptyTrainingData,
    #[error("feature width mismatch: model expects {expected}, got {got}")]
    FeatureWidthMismatch { expected: usize, got: usize },
    #[error("feature column {0:?} is reserved but not implemented")]
    ReservedFeature(String),
    #[error("nwp record at {0} is incomplete: {1}")]
    BadNwpRecord(String, String),
    #[error("nwp series has no data for {0}")]
    MissingNwpHour(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed NWP row: {msg}")]
    MalformedNwpRow { line: usize, msg: String },
}

/// Quantile levels carried by every forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantile {
    Q40,
    Q50,
    Q60,
}

impl Quantile {
    pub fn tau(self) -> f64 {
        match self {
            Quantile::Q40 => 0.40,
            Quantile::Q50 => 0.50,
            Quantile::Q60 => 0.60,
        }
    }
}

/// Which quantile of each series feeds the optimizer. The 60/40 bias
/// overestimates load and underestimates PV to hedge against undercharging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantileChoice {
    pub load: Quantile,
    pub pv: Quantile,
}

impl QuantileChoice {
    pub const MEDIAN: Self = Self {
        load: Quantile::Q50,
        pv: Quantile::Q50,
    };
    pub const BIASED_60_40: Self = Self {
        load: Quantile::Q60,
        pv: Quantile::Q40,
    };
}

/// The 40/50/60th-percentile values for one series at one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileTriple {
    pub q40: f64,
    pub q50: f64,
    pub q60: f64,
}

impl QuantileTriple {
    pub fn point(v: f64) -> Self {
        Self {
            q40: v,
            q50: v,
            q60: v,
        }
    }

    pub fn level(&self, q: Quantile) -> f64 {
        match q {
            Quantile::Q40 => self.q40,
            Quantile::Q50 => self.q50,
            Quantile::Q60 => self.q60,
        }
    }

    fn check(&self, hour: usize) -> Result<(), ForecastError> {
        if self.q40 < 0.0 || self.q50 < 0.0 || self.q60 < 0.0 {
            return Err(ForecastError::NegativeValue(hour));
        }
        if self.q40 > self.q50 + 1e-12 || self.q50 > self.q60 + 1e-12 {
            return Err(ForecastError::QuantilesOutOfOrder {
                hour,
                q40: self.q40,
                q50: self.q50,
                q60: self.q60,
            });
        }
        Ok(())
    }
}

/// Per-hour quantile forecasts of load and PV over a horizon.
///
/// `available[i]` is false when the producer had no usable source for that
/// hour (the gap policy ran out of fallbacks); the values are then zero and
/// the simulator falls back to automatic mode when executing that hour.
#[derive(Debug, Clone)]
pub struct ForecastSet {
    pub start: DateTime<FixedOffset>,
    pub horizon_h: usize,
    pub load_q: Vec<QuantileTriple>,
    pub pv_q: Vec<QuantileTriple>,
    pub available: Vec<bool>,
}

impl ForecastSet {
    pub fn new(
        start: DateTime<FixedOffset>,
        load_q: Vec<QuantileTriple>,
        pv_q: Vec<QuantileTriple>,
        available: Vec<bool>,
    ) -> Result<Self, ForecastError> {
        let horizon_h = load_q.len();
        if horizon_h == 0 {
            return Err(ForecastError::EmptyHorizon);
        }
        if pv_q.len() != horizon_h {
            return Err(ForecastError::LengthMismatch {
                expected: horizon_h,
                got: pv_q.len(),
            });
        }
        if available.len() != horizon_h {
            return Err(ForecastError::LengthMismatch {
                expected: horizon_h,
                got: available.len(),
            });
        }
        for (i, (l, p)) in load_q.iter().zip(&pv_q).enumerate() {
            l.check(i)?;
            p.check(i)?;
        }
        Ok(Self {
            start,
            horizon_h,
            load_q,
            pv_q,
            available,
        })
    }

    /// Index of timestamp `t` within the horizon, if covered.
    pub fn hour_offset(&self, t: DateTime<FixedOffset>) -> Option<usize> {
        let hours = (t - self.start).num_hours();
        if hours < 0 || self.start + Duration::hours(hours) != t {
            return None;
        }
        let idx = hours as usize;
        (idx < self.horizon_h).then_some(idx)
    }
}

/// Which series a persistence forecast replays; the other series (if any)
/// is filled from the actuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersistSeries {
    Load,
    Pv,
    Both,
}

/// Days searched backwards, same hour of day, when a persistence source
/// hour is a gap.
const GAP_FALLBACK_DAYS: i64 = 7;

/// Value at `source`, falling back to the most recent present value at the
/// same hour of day within the past week.
fn persisted_value(ds: &InverterDataset, source: DateTime<FixedOffset>) -> Option<(f64, f64)> {
    (0..=GAP_FALLBACK_DAYS)
        .map(|k| source - Duration::hours(24 * k))
        .find_map(|t| ds.value_at(t))
}

/// 24-hour persistence: each forecast hour repeats the value observed 24
/// hours earlier. Hours whose source would predate the dataset use the
/// actuals instead, so the first simulated day acts as a perfect forecast.
pub fn persistence_24h(
    ds: &InverterDataset,
    start: DateTime<FixedOffset>,
    horizon_h: usize,
    series: PersistSeries,
) -> Result<ForecastSet, ForecastError> {
    if horizon_h == 0 {
        return Err(ForecastError::EmptyHorizon);
    }
    let mut load_q = Vec::with_capacity(horizon_h);
    let mut pv_q = Vec::with_capacity(horizon_h);
    let mut available = Vec::with_capacity(horizon_h);
    for i in 0..horizon_h {
        let t = start + Duration::hours(i as i64);
        let source = t - Duration::hours(24);
        let persisted = if source < ds.first_timestamp() {
            ds.value_at(t)
        } else {
            persisted_value(ds, source)
        };
        let actual = ds.value_at(t);
        let (load, pv, ok) = match series {
            PersistSeries::Load => match (persisted, actual) {
                (Some((l, _)), Some((_, p))) => (l, p, true),
                _ => (0.0, 0.0, false),
            },
            PersistSeries::Pv => match (persisted, actual) {
                (Some((_, p)), Some((l, _))) => (l, p, true),
                _ => (0.0, 0.0, false),
            },
            PersistSeries::Both => match persisted {
                Some((l, p)) => (l, p, true),
                None => (0.0, 0.0, false),
            },
        };
        load_q.push(QuantileTriple::point(load));
        pv_q.push(QuantileTriple::point(pv));
        available.push(ok);
    }
    ForecastSet::new(start, load_q, pv_q, available)
}

/// 1-hour persistence: the entire horizon repeats the single value observed
/// in the hour before `start` (the latest data a live scheduler would hold).
pub fn persistence_1h(
    ds: &InverterDataset,
    start: DateTime<FixedOffset>,
    horizon_h: usize,
) -> Result<ForecastSet, ForecastError> {
    if horizon_h == 0 {
        return Err(ForecastError::EmptyHorizon);
    }
    let source = start - Duration::hours(1);
    let value = persisted_value(ds, source);
    let (load, pv, ok) = match value {
        Some((l, p)) => (l, p, true),
        None => (0.0, 0.0, false),
    };
    ForecastSet::new(
        start,
        vec![QuantileTriple::point(load); horizon_h],
        vec![QuantileTriple::point(pv); horizon_h],
        vec![ok; horizon_h],
    )
}

/// Perfect oracle: forecasts equal the actuals. Gap hours and hours beyond
/// the dataset are flagged unavailable.
pub fn perfect(
    ds: &InverterDataset,
    start: DateTime<FixedOffset>,
    horizon_h: usize,
) -> Result<ForecastSet, ForecastError> {
    if horizon_h == 0 {
        return Err(ForecastError::EmptyHorizon);
    }
    let mut load_q = Vec::with_capacity(horizon_h);
    let mut pv_q = Vec::with_capacity(horizon_h);
    let mut available = Vec::with_capacity(horizon_h);
    for i in 0..horizon_h {
        let t = start + Duration::hours(i as i64);
        match ds.value_at(t) {
            Some((l, p)) => {
                load_q.push(QuantileTriple::point(l));
                pv_q.push(QuantileTriple::point(p));
                available.push(true);
            }
            None => {
                load_q.push(QuantileTriple::point(0.0));
                pv_q.push(QuantileTriple::point(0.0));
                available.push(false);
            }
        }
    }
    ForecastSet::new(start, load_q, pv_q, available)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::HourlyRecord;
    use chrono::DateTime;

    fn ts(s: &str) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    /// 4 days of data where hour-of-day h has load h/10 and pv (24-h)/10,
    /// with optional gap hours.
    fn dataset(gaps: &[usize]) -> InverterDataset {
        let start = ts("2018-07-02T00:00:00+10:00");
        let records: Vec<_> = (0..96)
            .map(|i| {
                let t = start + Duration::hours(i);
                if gaps.contains(&(i as usize)) {
                    HourlyRecord::gap(t)
                } else {
                    HourlyRecord {
                        timestamp: t,
                        load_kwh: (i % 24) as f64 / 10.0,
                        pv_kwh: (24 - i % 24) as f64 / 10.0,
                        present: true,
                    }
                }
            })
            .collect();
        InverterDataset::new("s", 600, records).unwrap()
    }

    #[test]
    fn persistence_24h_repeats_yesterday() {
        let ds = dataset(&[]);
        let fc = persistence_24h(&ds, ts("2018-07-03T14:00:00+10:00"), 4, PersistSeries::Pv)
            .unwrap();
        // PV at 14:00 yesterday is (24-14)/10 = 1.0; the data is 24h-periodic
        // so the forecast equals the actual.
        assert_eq!(fc.pv_q[0].q50, 1.0);
        assert!(fc.available.iter().all(|&a| a));
        for i in 0..4 {
            let t = fc.start + Duration::hours(i as i64);
            let (l, p) = ds.value_at(t).unwrap();
            assert_eq!(fc.load_q[i].q50, l);
            assert_eq!(fc.pv_q[i].q50, p);
        }
    }

    #[test]
    fn persistence_first_day_uses_actuals() {
        let ds = dataset(&[]);
        let fc = persistence_24h(&ds, ts("2018-07-02T05:00:00+10:00"), 3, PersistSeries::Both)
            .unwrap();
        assert!(fc.available.iter().all(|&a| a));
        assert_eq!(fc.load_q[0].q50, 0.5);
    }

    #[test]
    fn persistence_gap_falls_back_one_more_day() {
        // Gap at hour 38 (day 1, 14:00). Forecasting day 2 14:00 falls back
        // to day 0 14:00, which holds the same value by periodicity.
        let ds = dataset(&[38]);
        let fc = persistence_24h(&ds, ts("2018-07-04T14:00:00+10:00"), 1, PersistSeries::Both)
            .unwrap();
        assert!(fc.available[0]);
        assert_eq!(fc.load_q[0].q50, 1.4);
    }

    #[test]
    fn persistence_1h_spreads_one_value() {
        let ds = dataset(&[]);
        let fc = persistence_1h(&ds, ts("2018-07-03T10:00:00+10:00"), 24).unwrap();
        // Source hour 09:00: load 0.9, pv 1.5.
        for i in 0..24 {
            assert_eq!(fc.load_q[i].q50, 0.9);
            assert_eq!(fc.pv_q[i].q50, 1.5);
        }
    }

    #[test]
    fn persistence_1h_gap_source_flags_when_no_fallback() {
        // Gap the source hour and every same-hour-of-day fallback.
        let gaps: Vec<usize> = (0..4).map(|d| 9 + 24 * d).collect();
        let ds = dataset(&gaps);
        let fc = persistence_1h(&ds, ts("2018-07-05T10:00:00+10:00"), 6).unwrap();
        assert!(fc.available.iter().all(|&a| !a));
    }

    #[test]
    fn perfect_equals_actuals_and_flags_gaps() {
        let ds = dataset(&[50]);
        let fc = perfect(&ds, ts("2018-07-04T00:00:00+10:00"), 24).unwrap();
        // Hour 50 is day 2 02:00.
        assert!(!fc.available[2]);
        assert!(fc.available[3]);
        assert_eq!(fc.load_q[5].q50, 0.5);
    }

    #[test]
    fn perfect_beyond_dataset_is_flagged() {
        let ds = dataset(&[]);
        let fc = perfect(&ds, ts("2018-07-05T20:00:00+10:00"), 24).unwrap();
        assert!(fc.available[0..4].iter().all(|&a| a));
        assert!(fc.available[4..].iter().all(|&a| !a));
    }

    #[test]
    fn quantile_order_enforced() {
        let bad = QuantileTriple {
            q40: 2.0,
            q50: 1.0,
            q60: 3.0,
        };
        let start = ts("2018-07-02T00:00:00+10:00");
        let err = ForecastSet::new(
            start,
            vec![bad],
            vec![QuantileTriple::point(0.0)],
            vec![true],
        )
        .unwrap_err();
        assert!(matches!(err, ForecastError::QuantilesOutOfOrder { .. }));
    }
}
