//! Forecast error metrics: MAPE plus the normalized variants that stay
//! defined when actuals hit zero (PV at night), and pinball loss for
//! quantile forecasts.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("series length mismatch: {actual} vs {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("empty series")]
    Empty,
    #[error("actual value at index {0} is zero; MAPE is undefined near zero actuals")]
    ZeroActual(usize),
    #[error("all actual values are zero; normalized metric undefined")]
    AllZeroActuals,
    #[error("quantile level {0} outside (0, 1)")]
    BadQuantileLevel(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub mape_pct: f64,
    pub nmae: f64,
    pub nrmse: f64,
    pub n: usize,
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<(), MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean absolute percentage error, in percent. Errors on zero actuals.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, predicted)?;
    let mut acc = 0.0;
    for (i, (&s, &p)) in actual.iter().zip(predicted).enumerate() {
        if s == 0.0 {
            return Err(MetricError::ZeroActual(i));
        }
        acc += ((s - p) / s).abs();
    }
    Ok(acc / actual.len() as f64 * 100.0)
}

/// Normalized mean absolute error: sum |s - p| / sum |s|.
pub fn nmae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, predicted)?;
    let num: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&s, &p)| (s - p).abs())
        .sum();
    let den: f64 = actual.iter().map(|&s| s.abs()).sum();
    if den == 0.0 {
        return Err(MetricError::AllZeroActuals);
    }
    Ok(num / den)
}

/// Normalized root mean squared error: sqrt(sum (s - p)^2 / sum s^2).
pub fn nrmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, predicted)?;
    let num: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&s, &p)| (s - p) * (s - p))
        .sum();
    let den: f64 = actual.iter().map(|&s| s * s).sum();
    if den == 0.0 {
        return Err(MetricError::AllZeroActuals);
    }
    Ok((num / den).sqrt())
}

/// Mean pinball loss at quantile level `tau`.
pub fn pinball(actual: &[f64], predicted: &[f64], tau: f64) -> Result<f64, MetricError> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(MetricError::BadQuantileLevel(tau));
    }
    check_lengths(actual, predicted)?;
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&s, &p)| {
            if s >= p {
                tau * (s - p)
            } else {
                (1.0 - tau) * (p - s)
            }
        })
        .sum();
    Ok(total / actual.len() as f64)
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * tau;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile rows emitted by the evaluation report.
pub const REPORT_PERCENTILES: [u32; 7] = [0, 20, 25, 50, 75, 80, 100];

/// Build the percentile table over per-site error reports: one row per
/// percentile in [`REPORT_PERCENTILES`], columns load NMAE/NRMSE then PV
/// NMAE/NRMSE.
pub fn percentile_table(load: &[ErrorReport], pv: &[ErrorReport]) -> Vec<(u32, [f64; 4])> {
    // Empty columns degrade to NaN so callers can emit a table unconditionally.
    fn sorted_col(mut values: Vec<f64>) -> Vec<f64> {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values.is_empty() {
            values.push(f64::NAN);
        }
        values
    }
    let load_nmae = sorted_col(load.iter().map(|r| r.nmae).collect());
    let load_nrmse = sorted_col(load.iter().map(|r| r.nrmse).collect());
    let pv_nmae = sorted_col(pv.iter().map(|r| r.nmae).collect());
    let pv_nrmse = sorted_col(pv.iter().map(|r| r.nrmse).collect());
    REPORT_PERCENTILES
        .iter()
        .map(|&p| {
            let tau = p as f64 / 100.0;
            (
                p,
                [
                    quantile_sorted(&load_nmae, tau),
                    quantile_sorted(&load_nrmse, tau),
                    quantile_sorted(&pv_nmae, tau),
                    quantile_sorted(&pv_nrmse, tau),
                ],
            )
        })
        .collect()
}
