//! Forest forecaster driven by the site's own history: calendar features
//! plus the load and PV observed 24 hours earlier. With no weather feed in
//! a replay, the day-lagged observations are the stand-in signal for
//! day-to-day conditions, and the forest learns how far to trust them.
//!
//! One pair of load/PV models is trained per local day on the trailing
//! 30 days of present records, mirroring a scheduler that refits early each
//! morning. Predictions for the following 48 hours are precomputed so the
//! hourly re-optimization loop can assemble 24-hour forecast sets cheaply.
//! A 24-hour horizon with 24-hour lags stays causal: every lag an hourly
//! re-solve reads predates the re-solve.

use chrono::{DateTime, Duration, FixedOffset, Timelike};

use super::features::calendar_features;
use super::qrf::{train_quantile_model, ForestParams, QuantileModel};
use super::{ForecastError, ForecastSet, QuantileTriple};
use crate::timeseries::InverterDataset;

/// Training window, days.
pub const TRAINING_WINDOW_DAYS: i64 = 30;
/// Minimum rows before a model is trained at all.
pub const MIN_TRAINING_ROWS: usize = 24;
/// Hours of predictions precomputed per daily model; covers a 24-hour
/// horizon started from any hour of the day.
const PRED_SPAN_H: usize = 48;
/// Hour encodings and the weekend flag. The annual encodings are left out
/// because a 30-day window carries no seasonal signal, and date-like
/// features only let trees memorize particular days.
fn feature_row(t: DateTime<FixedOffset>) -> Vec<f64> {
    let cal = calendar_features(t);
    vec![cal[0], cal[1], cal[4]]
}

struct DayModels {
    /// Per-hour predictions for [day 00:00, day+48h) and availability, or
    /// None when there was not enough history to train.
    preds: Option<Vec<(QuantileTriple, QuantileTriple, bool)>>,
}

/// Per-day forest models over an entire dataset, ready for horizon queries.
pub struct HistoryForecaster {
    day0: DateTime<FixedOffset>,
    days: Vec<DayModels>,
}

impl HistoryForecaster {
    /// Train models for every local day spanned by the dataset.
    pub fn train(ds: &InverterDataset, seed: u64) -> Self {
        let first = ds.first_timestamp();
        let day0 = first - Duration::hours(first.hour() as i64);
        let total_hours = ds.records().len() as i64 + first.hour() as i64;
        let n_days = (total_hours + 23) / 24;

        let mut days = Vec::with_capacity(n_days as usize);
        for d in 0..n_days {
            let day_start = day0 + Duration::hours(24 * d);
            let window_start = day_start - Duration::hours(24 * TRAINING_WINDOW_DAYS);
            let mut features: Vec<Vec<f64>> = Vec::new();
            let mut load_targets: Vec<f64> = Vec::new();
            let mut pv_targets: Vec<f64> = Vec::new();
            for r in ds.records() {
                if !r.present || r.timestamp < window_start {
                    continue;
                }
                if r.timestamp >= day_start {
                    break;
                }
                features.push(feature_row(r.timestamp));
                load_targets.push(r.load_kwh);
                pv_targets.push(r.pv_kwh);
            }
            if features.len() < MIN_TRAINING_ROWS {
                days.push(DayModels { preds: None });
                continue;
            }
            let window_days = TRAINING_WINDOW_DAYS.min((features.len() / 24) as i64) as u32;
            let load_params = ForestParams {
                seed: seed.wrapping_add((2 * d) as u64),
                ..ForestParams::default()
            };
            let pv_params = ForestParams {
                seed: seed.wrapping_add((2 * d + 1) as u64),
                ..ForestParams::default()
            };
            let load_model =
                train_quantile_model(&features, &load_targets, window_days, &load_params);
            let pv_model = train_quantile_model(&features, &pv_targets, window_days, &pv_params);
            match (load_model, pv_model) {
                (Ok(lm), Ok(pm)) => {
                    let preds = precompute(&lm, &pm, day_start);
                    days.push(DayModels { preds: Some(preds) });
                }
                _ => days.push(DayModels { preds: None }),
            }
        }
        Self { day0, days }
    }

    /// A quantile forecast over `[start, start + horizon_h)` from the model
    /// of `start`'s day. Hours are flagged unavailable when no model exists
    /// or the hour's lag could not be resolved.
    pub fn forecast(
        &self,
        start: DateTime<FixedOffset>,
        horizon_h: usize,
    ) -> Result<ForecastSet, ForecastError> {
        if horizon_h == 0 {
            return Err(ForecastError::EmptyHorizon);
        }
        let day_idx = (start - self.day0).num_hours().div_euclid(24);
        let preds = if day_idx >= 0 && (day_idx as usize) < self.days.len() {
            self.days[day_idx as usize].preds.as_ref()
        } else {
            None
        };
        let mut load_q = Vec::with_capacity(horizon_h);
        let mut pv_q = Vec::with_capacity(horizon_h);
        let mut available = Vec::with_capacity(horizon_h);
        match preds {
            Some(preds) => {
                let day_start = self.day0 + Duration::hours(24 * day_idx);
                let base = (start - day_start).num_hours() as usize;
                for i in 0..horizon_h {
                    let idx = base + i;
                    if idx < preds.len() && preds[idx].2 {
                        load_q.push(preds[idx].0);
                        pv_q.push(preds[idx].1);
                        available.push(true);
                    } else {
                        load_q.push(QuantileTriple::point(0.0));
                        pv_q.push(QuantileTriple::point(0.0));
                        available.push(false);
                    }
                }
            }
            None => {
                load_q = vec![QuantileTriple::point(0.0); horizon_h];
                pv_q = vec![QuantileTriple::point(0.0); horizon_h];
                available = vec![false; horizon_h];
            }
        }
        ForecastSet::new(start, load_q, pv_q, available)
    }
}

fn precompute(
    load_model: &QuantileModel,
    pv_model: &QuantileModel,
    day_start: DateTime<FixedOffset>,
) -> Vec<(QuantileTriple, QuantileTriple, bool)> {
    (0..PRED_SPAN_H)
        .map(|h| {
            let t = day_start + Duration::hours(h as i64);
            let fv = feature_row(t);
            let load = load_model
                .predict_quantiles(&fv)
                .expect("feature width is fixed");
            let pv = pv_model
                .predict_quantiles(&fv)
                .expect("feature width is fixed");
            (load, pv, true)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::HourlyRecord;

    fn ts(s: &str) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn periodic_dataset(days: i64) -> InverterDataset {
        let start = ts("2018-07-02T00:00:00+10:00");
        let records: Vec<_> = (0..days * 24)
            .map(|i| {
                let h = i % 24;
                HourlyRecord {
                    timestamp: start + Duration::hours(i),
                    load_kwh: 0.3 + 0.1 * (h as f64 / 23.0),
                    pv_kwh: if (6..18).contains(&h) { 1.0 } else { 0.0 },
                    present: true,
                }
            })
            .collect();
        InverterDataset::new("s", 600, records).unwrap()
    }

    #[test]
    fn first_day_has_no_model() {
        let ds = periodic_dataset(5);
        let f = HistoryForecaster::train(&ds, 1);
        let fc = f.forecast(ts("2018-07-02T03:00:00+10:00"), 24).unwrap();
        assert!(fc.available.iter().all(|&a| !a));
    }

    #[test]
    fn later_days_learn_the_daily_shape() {
        let ds = periodic_dataset(8);
        let f = HistoryForecaster::train(&ds, 1);
        let fc = f.forecast(ts("2018-07-08T00:00:00+10:00"), 24).unwrap();
        assert!(fc.available.iter().all(|&a| a));
        // Night hours have zero PV in every training row.
        assert_eq!(fc.pv_q[2].q50, 0.0);
        // Midday PV is 1.0 in every training row.
        assert!((fc.pv_q[12].q50 - 1.0).abs() < 1e-9);
        for i in 0..24 {
            assert!(fc.load_q[i].q40 <= fc.load_q[i].q60);
        }
    }

    #[test]
    fn horizon_crossing_midnight_stays_available() {
        let ds = periodic_dataset(8);
        let f = HistoryForecaster::train(&ds, 1);
        let fc = f.forecast(ts("2018-07-08T23:00:00+10:00"), 24).unwrap();
        assert!(fc.available.iter().all(|&a| a));
    }

    #[test]
    fn tracks_day_level_shifts_through_the_lag() {
        // PV alternates between high and low in two-day blocks, so the
        // second day of each block is predictable from the lag feature
        // where calendar features alone see nothing.
        let start = ts("2018-07-02T00:00:00+10:00");
        let records: Vec<_> = (0..40 * 24)
            .map(|i| {
                let day = i / 24;
                let h = i % 24;
                let level = if (day / 2) % 2 == 0 { 1.6 } else { 0.4 };
                HourlyRecord {
                    timestamp: start + Duration::hours(i),
                    load_kwh: 0.5,
                    pv_kwh: if (6..18).contains(&h) { level } else { 0.0 },
                    present: true,
                }
            })
            .collect();
        let ds = InverterDataset::new("s", 600, records).unwrap();
        let f = HistoryForecaster::train(&ds, 1);
        // 2018-08-08 is day 37 (second day of a high block): yesterday high.
        let high = f.forecast(ts("2018-08-08T00:00:00+10:00"), 24).unwrap();
        // 2018-08-06 is day 35 (second day of a low block): yesterday low.
        let low = f.forecast(ts("2018-08-06T00:00:00+10:00"), 24).unwrap();
        assert!(
            high.pv_q[12].q50 > low.pv_q[12].q50 + 0.4,
            "high {:?} low {:?}",
            high.pv_q[12],
            low.pv_q[12]
        );
    }
}
