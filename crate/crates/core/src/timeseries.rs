//! Hourly inverter time series: CSV ingestion, gap filling and site
//! eligibility checks.
//!
//! The on-disk format is a UTF-8 CSV with header `timestamp,load_kwh,pv_kwh`.
//! Timestamps are ISO-8601 local time with an explicit UTC offset
//! (`2018-07-01T14:00:00+10:00`) and must sit on exact hour boundaries.
//! Missing hours are simply absent from the file; loading fills them back in
//! as records with `present = false` so that the in-memory series is always
//! contiguous and strictly hourly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset, Timelike};
use thiserror::Error;

/// Minimum mean load/PV power for a site to qualify for optimization (W).
pub const MIN_MEAN_POWER_W: f64 = 200.0;
/// Minimum fraction of hours that must be present.
pub const MIN_COMPLETENESS: f64 = 0.9;
/// Sites with a long-run PV/load energy ratio at or above this are skipped.
pub const MAX_PV_LOAD_RATIO: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("line {line}: negative energy value {value}")]
    NegativeEnergy { line: usize, value: f64 },
    #[error("line {line}: timestamp {ts} is not on an hour boundary (sub-hourly data is rejected, not resampled)")]
    NotOnHour { line: usize, ts: String },
    #[error("line {line}: timestamp offset {found_minutes} min does not match dataset offset {expected_minutes} min")]
    OffsetMismatch {
        line: usize,
        found_minutes: i32,
        expected_minutes: i32,
    },
    #[error("line {line}: non-monotonic timestamp {ts}")]
    NonMonotonic { line: usize, ts: String },
    #[error("line {line}: duplicate hour {ts}")]
    DuplicateHour { line: usize, ts: String },
    #[error("dataset is empty")]
    Empty,
    #[error("dataset has no present records (all gaps)")]
    AllGaps,
    #[error("records are not contiguous hourly: expected {expected}, got {got}")]
    NotContiguous { expected: String, got: String },
}

/// One hour of telemetry. `present = false` marks a gap; energy fields are
/// zero and must not contribute to any aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub timestamp: DateTime<FixedOffset>,
    pub load_kwh: f64,
    pub pv_kwh: f64,
    pub present: bool,
}

impl HourlyRecord {
    pub fn gap(timestamp: DateTime<FixedOffset>) -> Self {
        Self {
            timestamp,
            load_kwh: 0.0,
            pv_kwh: 0.0,
            present: false,
        }
    }
}

/// A contiguous hourly series for one site, gaps included.
#[derive(Debug, Clone)]
pub struct InverterDataset {
    pub site_id: String,
    pub utc_offset_minutes: i32,
    records: Vec<HourlyRecord>,
}

impl InverterDataset {
    /// Build a dataset from already-contiguous records. Records must be
    /// strictly hourly with no missing entries (use gap records instead).
    pub fn new(
        site_id: impl Into<String>,
        utc_offset_minutes: i32,
        records: Vec<HourlyRecord>,
    ) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        for pair in records.windows(2) {
            let expected = pair[0].timestamp + Duration::hours(1);
            if pair[1].timestamp != expected {
                return Err(DataError::NotContiguous {
                    expected: expected.to_rfc3339(),
                    got: pair[1].timestamp.to_rfc3339(),
                });
            }
        }
        Ok(Self {
            site_id: site_id.into(),
            utc_offset_minutes,
            records,
        })
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn first_timestamp(&self) -> DateTime<FixedOffset> {
        self.records[0].timestamp
    }

    pub fn last_timestamp(&self) -> DateTime<FixedOffset> {
        self.records[self.records.len() - 1].timestamp
    }

    /// Index of the record holding `t`, if `t` falls inside the series.
    pub fn index_of(&self, t: DateTime<FixedOffset>) -> Option<usize> {
        let hours = (t - self.first_timestamp()).num_hours();
        if hours < 0 || t != self.first_timestamp() + Duration::hours(hours) {
            return None;
        }
        let idx = hours as usize;
        (idx < self.records.len()).then_some(idx)
    }

    /// Load and PV for hour `t`, present records only.
    pub fn value_at(&self, t: DateTime<FixedOffset>) -> Option<(f64, f64)> {
        self.index_of(t).and_then(|i| {
            let r = &self.records[i];
            r.present.then_some((r.load_kwh, r.pv_kwh))
        })
    }

    pub fn present_count(&self) -> usize {
        self.records.iter().filter(|r| r.present).count()
    }
}

/// Site summary used to decide whether optimization should run at all.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityReport {
    pub mean_load_w: f64,
    pub mean_pv_w: f64,
    pub completeness: f64,
    pub pv_load_ratio: f64,
    pub eligible: bool,
}

/// Parse a site CSV into a contiguous hourly dataset.
///
/// Hours missing between the first and last timestamp are filled with gap
/// records. Rows must be strictly increasing; duplicates and out-of-order
/// rows are errors, as are negative energies, sub-hourly timestamps and
/// offsets that disagree with `utc_offset_minutes`.
pub fn load_dataset(
    path: impl AsRef<Path>,
    utc_offset_minutes: i32,
) -> Result<InverterDataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let site_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "site".to_string());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let mut records: Vec<HourlyRecord> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| DataError::MalformedRow {
            line,
            msg: e.to_string(),
        })?;
        if row.len() != 3 {
            return Err(DataError::MalformedRow {
                line,
                msg: format!("expected 3 fields, got {}", row.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(&row[0]).map_err(|e| DataError::MalformedRow {
            line,
            msg: format!("bad timestamp {:?}: {e}", &row[0]),
        })?;
        if ts.offset().local_minus_utc() != utc_offset_minutes * 60 {
            return Err(DataError::OffsetMismatch {
                line,
                found_minutes: ts.offset().local_minus_utc() / 60,
                expected_minutes: utc_offset_minutes,
            });
        }
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(DataError::NotOnHour {
                line,
                ts: row[0].to_string(),
            });
        }
        let parse_energy = |field: &str| -> Result<f64, DataError> {
            let v: f64 = field.trim().parse().map_err(|_| DataError::MalformedRow {
                line,
                msg: format!("bad energy value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::MalformedRow {
                    line,
                    msg: format!("non-finite energy value {field:?}"),
                });
            }
            if v < 0.0 {
                return Err(DataError::NegativeEnergy { line, value: v });
            }
            Ok(v)
        };
        let load_kwh = parse_energy(&row[1])?;
        let pv_kwh = parse_energy(&row[2])?;

        if let Some(last) = records.last() {
            if ts == last.timestamp {
                return Err(DataError::DuplicateHour {
                    line,
                    ts: row[0].to_string(),
                });
            }
            if ts < last.timestamp {
                return Err(DataError::NonMonotonic {
                    line,
                    ts: row[0].to_string(),
                });
            }
            let mut expected = last.timestamp + Duration::hours(1);
            while expected < ts {
                records.push(HourlyRecord::gap(expected));
                expected += Duration::hours(1);
            }
        }
        records.push(HourlyRecord {
            timestamp: ts,
            load_kwh,
            pv_kwh,
            present: true,
        });
    }

    InverterDataset::new(site_id, utc_offset_minutes, records)
}

/// Write a dataset back to CSV. Gap records are omitted, so a round trip
/// through [`load_dataset`] reproduces the dataset exactly.
pub fn write_dataset(ds: &InverterDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    writeln!(w, "timestamp,load_kwh,pv_kwh").map_err(io_err)?;
    for r in ds.records().iter().filter(|r| r.present) {
        writeln!(
            w,
            "{},{},{}",
            r.timestamp.to_rfc3339(),
            r.load_kwh,
            r.pv_kwh
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Compute the eligibility report for a dataset.
///
/// Means and sums run over present records only; mean power in watts is the
/// mean hourly energy in kWh times 1000. The PV/load ratio is the ratio of
/// total energies over the whole series, not a mean of hourly ratios.
pub fn eligibility(ds: &InverterDataset) -> Result<EligibilityReport, DataError> {
    let mut n = 0usize;
    let mut sum_load = 0.0;
    let mut sum_pv = 0.0;
    for r in ds.records() {
        if r.present {
            n += 1;
            sum_load += r.load_kwh;
            sum_pv += r.pv_kwh;
        }
    }
    if n == 0 {
        return Err(DataError::AllGaps);
    }
    let mean_load_w = sum_load / n as f64 * 1000.0;
    let mean_pv_w = sum_pv / n as f64 * 1000.0;
    let completeness = n as f64 / ds.records().len() as f64;
    let pv_load_ratio = sum_pv / sum_load;
    let eligible = mean_load_w >= MIN_MEAN_POWER_W
        && mean_pv_w >= MIN_MEAN_POWER_W
        && completeness >= MIN_COMPLETENESS
        && pv_load_ratio < MAX_PV_LOAD_RATIO;
    Ok(EligibilityReport {
        mean_load_w,
        mean_pv_w,
        completeness,
        pv_load_ratio,
        eligible,
    })
}
