//! Feature engineering for the forest models: cyclic time encodings,
//! weekend flag, and numerical-weather-prediction variables interpolated to
//! the site by inverse distance weighting.
//!
//! NWP data arrives pre-extracted as hourly CSV with one row per grid point:
//! `timestamp,grid_id,distance_km,temp_2m,rh_1000,dswrf,pressure,u10,v10,tcc`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, FixedOffset, Timelike, Weekday};

use super::ForecastError;

/// Feature columns that upstream feature sets define via external formulas;
/// they are reserved here but not computed.
pub const RESERVED_FEATURE_COLUMNS: [&str; 2] = ["wind_chill_index", "solar_module_temperature"];

/// Options for feature assembly. Requesting a reserved column fails rather
/// than silently producing a guessed value.
#[derive(Debug, Clone, Default)]
pub struct FeatureConfig {
    pub extra_columns: Vec<String>,
}

/// Sine/cosine encoding of hour of day: `f(2 pi h / 24)`.
pub fn hour_encoding(hour: u32) -> (f64, f64) {
    let angle = 2.0 * PI * hour as f64 / 24.0;
    (angle.sin(), angle.cos())
}

/// Sine/cosine encoding of Julian day of year: `f(2 pi j / 365)`.
pub fn julian_encoding(jday: u32) -> (f64, f64) {
    let angle = 2.0 * PI * jday as f64 / 365.0;
    (angle.sin(), angle.cos())
}

pub fn is_weekend(t: DateTime<FixedOffset>) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Calendar-only feature vector: `[sin_hour, cos_hour, sin_jday, cos_jday,
/// is_weekend]`. This is what the simulator's forest models train on when no
/// weather feed is supplied.
pub fn calendar_features(t: DateTime<FixedOffset>) -> [f64; 5] {
    let (sh, ch) = hour_encoding(t.hour());
    let (sj, cj) = julian_encoding(t.ordinal());
    [sh, ch, sj, cj, if is_weekend(t) { 1.0 } else { 0.0 }]
}

pub const CALENDAR_FEATURE_NAMES: [&str; 5] =
    ["sin_hour", "cos_hour", "sin_jday", "cos_jday", "is_weekend"];

/// Inverse-distance-weighted mean of `(value, distance)` samples:
/// `sum(v_i / d_i) / sum(1 / d_i)`.
pub fn idw(points: &[(f64, f64)]) -> f64 {
    debug_assert!(!points.is_empty());
    let mut num = 0.0;
    let mut den = 0.0;
    for &(v, d) in points {
        debug_assert!(d > 0.0);
        num += v / d;
        den += 1.0 / d;
    }
    num / den
}

/// One grid point's variables for one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct NwpRecord {
    pub timestamp: DateTime<FixedOffset>,
    pub grid_id: u32,
    pub distance_km: f64,
    pub temp_2m: f64,
    pub rh_1000: f64,
    pub dswrf: f64,
    pub pressure: f64,
    pub u10: f64,
    pub v10: f64,
    pub tcc: f64,
}

impl NwpRecord {
    fn var(&self, v: NwpVar) -> f64 {
        match v {
            NwpVar::Temp2m => self.temp_2m,
            NwpVar::Rh1000 => self.rh_1000,
            NwpVar::Dswrf => self.dswrf,
            NwpVar::Pressure => self.pressure,
            NwpVar::U10 => self.u10,
            NwpVar::V10 => self.v10,
            NwpVar::Tcc => self.tcc,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum NwpVar {
    Temp2m,
    Rh1000,
    Dswrf,
    Pressure,
    U10,
    V10,
    Tcc,
}

/// Hourly grid-point records keyed by timestamp (typically four surrounding
/// points per hour).
#[derive(Debug, Clone, Default)]
pub struct NwpSeries {
    hours: BTreeMap<DateTime<FixedOffset>, Vec<NwpRecord>>,
}

impl NwpSeries {
    pub fn from_records(records: Vec<NwpRecord>) -> Self {
        let mut hours: BTreeMap<DateTime<FixedOffset>, Vec<NwpRecord>> = BTreeMap::new();
        for r in records {
            hours.entry(r.timestamp).or_default().push(r);
        }
        // Deterministic ordering within an hour.
        for v in hours.values_mut() {
            v.sort_by_key(|r| r.grid_id);
        }
        Self { hours }
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    /// Grid records for `t`, clamped to the nearest covered hour at the
    /// series edges so lead/lag features stay defined.
    fn at_or_edge(&self, t: DateTime<FixedOffset>) -> Result<&[NwpRecord], ForecastError> {
        if let Some(v) = self.hours.get(&t) {
            return Ok(v);
        }
        let first = self.hours.keys().next();
        let last = self.hours.keys().next_back();
        match (first, last) {
            (Some(&f), _) if t < f => Ok(&self.hours[&f]),
            (_, Some(&l)) if t > l => Ok(&self.hours[&l]),
            _ => Err(ForecastError::MissingNwpHour(t.to_rfc3339())),
        }
    }

    fn plain_and_idw(&self, t: DateTime<FixedOffset>, var: NwpVar) -> Result<(f64, f64), ForecastError> {
        let recs = self.at_or_edge(t)?;
        // Plain value: nearest grid point, lowest id on ties.
        let nearest = recs
            .iter()
            .min_by(|a, b| {
                a.distance_km
                    .partial_cmp(&b.distance_km)
                    .unwrap()
                    .then(a.grid_id.cmp(&b.grid_id))
            })
            .ok_or_else(|| ForecastError::MissingNwpHour(t.to_rfc3339()))?;
        let points: Vec<(f64, f64)> = recs.iter().map(|r| (r.var(var), r.distance_km)).collect();
        Ok((nearest.var(var), idw(&points)))
    }
}

/// Load the NWP CSV schema described in the module docs.
pub fn load_nwp_csv(
    path: impl AsRef<Path>,
    utc_offset_minutes: i32,
) -> Result<NwpSeries, ForecastError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ForecastError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| ForecastError::MalformedNwpRow {
            line,
            msg: e.to_string(),
        })?;
        if row.len() != 10 {
            return Err(ForecastError::MalformedNwpRow {
                line,
                msg: format!("expected 10 fields, got {}", row.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(&row[0]).map_err(|e| {
            ForecastError::MalformedNwpRow {
                line,
                msg: format!("bad timestamp {:?}: {e}", &row[0]),
            }
        })?;
        if ts.offset().local_minus_utc() != utc_offset_minutes * 60 {
            return Err(ForecastError::MalformedNwpRow {
                line,
                msg: format!("timestamp offset does not match {utc_offset_minutes} minutes"),
            });
        }
        let num = |idx: usize| -> Result<f64, ForecastError> {
            row[idx]
                .trim()
                .parse()
                .map_err(|_| ForecastError::MalformedNwpRow {
                    line,
                    msg: format!("bad numeric field {:?}", &row[idx]),
                })
        };
        let grid_id: u32 = row[1]
            .trim()
            .parse()
            .map_err(|_| ForecastError::MalformedNwpRow {
                line,
                msg: format!("bad grid id {:?}", &row[1]),
            })?;
        let distance_km = num(2)?;
        if distance_km <= 0.0 {
            return Err(ForecastError::MalformedNwpRow {
                line,
                msg: "distance must be positive".to_string(),
            });
        }
        records.push(NwpRecord {
            timestamp: ts,
            grid_id,
            distance_km,
            temp_2m: num(3)?,
            rh_1000: num(4)?,
            dswrf: num(5)?,
            pressure: num(6)?,
            u10: num(7)?,
            v10: num(8)?,
            tcc: num(9)?,
        });
    }
    Ok(NwpSeries::from_records(records))
}

/// Named feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

/// Feature set selector: load models use calendar + temperature/humidity;
/// PV models add the solar stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureTarget {
    Load,
    Pv,
}

/// Assemble the full weather-aware feature vector for an hour.
///
/// Load features: time encodings, weekend flag, 2 m temperature and
/// 1000 hPa relative humidity (plain and IDW). PV adds shortwave radiation
/// with leads and lags at 1-3 hours, surface pressure and its 1-hour
/// backward difference, 10 m wind components, total cloud cover and the
/// cloud-radiation product, each in plain and IDW form.
pub fn build_features(
    series: &NwpSeries,
    t: DateTime<FixedOffset>,
    target: FeatureTarget,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, ForecastError> {
    if let Some(name) = cfg.extra_columns.first() {
        // Only the reserved derived-meteorology columns are recognized as
        // extras, and those are declared but not computed.
        return Err(ForecastError::ReservedFeature(name.clone()));
    }

    let mut names: Vec<String> = CALENDAR_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut values = calendar_features(t).to_vec();

    let push_pair =
        |names: &mut Vec<String>, values: &mut Vec<f64>, name: &str, pair: (f64, f64)| {
            names.push(name.to_string());
            values.push(pair.0);
            names.push(format!("{name}_idw"));
            values.push(pair.1);
        };

    push_pair(&mut names, &mut values, "temp_2m", series.plain_and_idw(t, NwpVar::Temp2m)?);
    push_pair(&mut names, &mut values, "rh_1000", series.plain_and_idw(t, NwpVar::Rh1000)?);

    if target == FeatureTarget::Pv {
        push_pair(&mut names, &mut values, "dswrf", series.plain_and_idw(t, NwpVar::Dswrf)?);
        for lag in 1..=3i64 {
            let ahead = series.plain_and_idw(t + Duration::hours(lag), NwpVar::Dswrf)?;
            push_pair(&mut names, &mut values, &format!("dswrf_lead{lag}"), ahead);
            let behind = series.plain_and_idw(t - Duration::hours(lag), NwpVar::Dswrf)?;
            push_pair(&mut names, &mut values, &format!("dswrf_lag{lag}"), behind);
        }
        let pressure = series.plain_and_idw(t, NwpVar::Pressure)?;
        push_pair(&mut names, &mut values, "pressure", pressure);
        let prev = series.plain_and_idw(t - Duration::hours(1), NwpVar::Pressure)?;
        push_pair(
            &mut names,
            &mut values,
            "pressure_diff_1h",
            (pressure.0 - prev.0, pressure.1 - prev.1),
        );
        push_pair(&mut names, &mut values, "u10", series.plain_and_idw(t, NwpVar::U10)?);
        push_pair(&mut names, &mut values, "v10", series.plain_and_idw(t, NwpVar::V10)?);
        let tcc = series.plain_and_idw(t, NwpVar::Tcc)?;
        push_pair(&mut names, &mut values, "tcc", tcc);
        let dswrf = series.plain_and_idw(t, NwpVar::Dswrf)?;
        push_pair(
            &mut names,
            &mut values,
            "tcc_x_dswrf",
            (tcc.0 * dswrf.0, tcc.1 * dswrf.1),
        );
    }

    Ok(FeatureVector { names, values })
}
