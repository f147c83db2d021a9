//! Batch runner: every (dataset, tariff, strategy) cell, in parallel, with
//! the aggregate cost grid and money-saved counts.

use rayon::prelude::*;

use super::{simulate_with_forecaster, CostReport, SimError, SimOptions, Strategy};
use crate::forecast::history::HistoryForecaster;
use crate::tariff::TariffSchedule;
use crate::timeseries::InverterDataset;

/// How grid cells aggregate cost-per-kWh across sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Total cost over total load: sites contribute by energy.
    #[default]
    LoadWeighted,
    /// Plain mean of per-site cost-per-kWh.
    Unweighted,
}

#[derive(Debug, Clone)]
pub struct MatrixRequest<'a> {
    pub datasets: &'a [InverterDataset],
    pub tariffs: &'a [TariffSchedule],
    pub strategies: &'a [Strategy],
    pub opts: SimOptions,
    pub weighting: Weighting,
}

/// One simulated cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub site_id: String,
    pub tariff: String,
    pub strategy: Strategy,
    pub report: CostReport,
    pub pv_load_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct MatrixResult {
    pub tariff_names: Vec<String>,
    pub strategies: Vec<Strategy>,
    /// cost_grid[tariff][strategy]: aggregate c/kWh.
    pub cost_grid: Vec<Vec<f64>>,
    /// save_counts[tariff][strategy]: sites where the strategy's total cost
    /// beat automatic mode under the same tariff.
    pub save_counts: Vec<Vec<usize>>,
    pub cells: Vec<CellResult>,
}

/// Simulate the full grid. The automatic baseline is always computed per
/// (site, tariff) for the save counts, whether or not it was requested.
pub fn simulate_matrix(req: &MatrixRequest) -> Result<MatrixResult, SimError> {
    // Forest forecasters depend only on the dataset, so train once per site.
    let forecasters: Vec<Option<HistoryForecaster>> = if req
        .strategies
        .iter()
        .any(|s| s.uses_forest())
    {
        req.datasets
            .par_iter()
            .map(|ds| Some(HistoryForecaster::train(ds, req.opts.seed)))
            .collect()
    } else {
        (0..req.datasets.len()).map(|_| None).collect()
    };

    let mut run_strategies: Vec<Strategy> = req.strategies.to_vec();
    if !run_strategies.contains(&Strategy::Automatic) {
        run_strategies.push(Strategy::Automatic);
    }

    let mut jobs = Vec::new();
    for ti in 0..req.tariffs.len() {
        for di in 0..req.datasets.len() {
            for &strategy in &run_strategies {
                jobs.push((ti, di, strategy));
            }
        }
    }

    let cells: Result<Vec<(usize, usize, Strategy, CostReport, f64)>, SimError> = jobs
        .par_iter()
        .map(|&(ti, di, strategy)| {
            let ds = &req.datasets[di];
            let result = simulate_with_forecaster(
                ds,
                &req.tariffs[ti],
                strategy,
                &req.opts,
                forecasters[di].as_ref(),
            )?;
            let ratio = crate::timeseries::eligibility(ds)
                .map(|e| e.pv_load_ratio)
                .unwrap_or(f64::NAN);
            Ok((ti, di, strategy, result.report, ratio))
        })
        .collect();
    let mut cells = cells?;
    cells.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));

    let nt = req.tariffs.len();
    let ns = req.strategies.len();
    let lookup = |ti: usize, di: usize, s: Strategy| -> &CostReport {
        cells
            .iter()
            .find(|c| c.0 == ti && c.1 == di && c.2 == s)
            .map(|c| &c.3)
            .expect("every cell was simulated")
    };

    let mut cost_grid = vec![vec![0.0; ns]; nt];
    let mut save_counts = vec![vec![0usize; ns]; nt];
    for ti in 0..nt {
        for (si, &strategy) in req.strategies.iter().enumerate() {
            let mut total_cost = 0.0;
            let mut total_load = 0.0;
            let mut per_site_sum = 0.0;
            let mut saves = 0usize;
            for di in 0..req.datasets.len() {
                let report = lookup(ti, di, strategy);
                total_cost += report.total_cost_c;
                total_load += report.total_load_kwh;
                per_site_sum += report.cost_c_per_kwh;
                let auto = lookup(ti, di, Strategy::Automatic);
                if report.total_cost_c < auto.total_cost_c {
                    saves += 1;
                }
            }
            cost_grid[ti][si] = match req.weighting {
                Weighting::LoadWeighted => {
                    if total_load > 0.0 {
                        total_cost / total_load
                    } else {
                        0.0
                    }
                }
                Weighting::Unweighted => per_site_sum / req.datasets.len() as f64,
            };
            save_counts[ti][si] = saves;
        }
    }

    let out_cells = cells
        .into_iter()
        .filter(|c| req.strategies.contains(&c.2))
        .map(|(ti, di, strategy, report, ratio)| CellResult {
            site_id: req.datasets[di].site_id.clone(),
            tariff: req.tariffs[ti].name.clone(),
            strategy,
            report,
            pv_load_ratio: ratio,
        })
        .collect();

    Ok(MatrixResult {
        tariff_names: req.tariffs.iter().map(|t| t.name.clone()).collect(),
        strategies: req.strategies.to_vec(),
        cost_grid,
        save_counts,
        cells: out_cells,
    })
}

impl MatrixResult {
    /// Cost grid as CSV: one row per tariff plus an unweighted average row.
    pub fn costs_csv(&self) -> String {
        let mut out = String::from("tariff");
        for s in &self.strategies {
            out.push(',');
            out.push_str(s.name());
        }
        out.push('\n');
        for (ti, name) in self.tariff_names.iter().enumerate() {
            out.push_str(name);
            for v in &self.cost_grid[ti] {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        if self.tariff_names.len() > 1 {
            out.push_str("average");
            for si in 0..self.strategies.len() {
                let mean: f64 = self.cost_grid.iter().map(|row| row[si]).sum::<f64>()
                    / self.cost_grid.len() as f64;
                out.push_str(&format!(",{mean:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// Save-count grid as CSV, with a total row, for the optimized
    /// strategies only (baselines always "save" trivially or never).
    pub fn savecounts_csv(&self) -> String {
        let cols: Vec<usize> = self
            .strategies
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_optimized())
            .map(|(i, _)| i)
            .collect();
        let mut out = String::from("tariff");
        for &i in &cols {
            out.push(',');
            out.push_str(self.strategies[i].name());
        }
        out.push('\n');
        for (ti, name) in self.tariff_names.iter().enumerate() {
            out.push_str(name);
            for &i in &cols {
                out.push_str(&format!(",{}", self.save_counts[ti][i]));
            }
            out.push('\n');
        }
        out.push_str("total");
        for &i in &cols {
            let total: usize = self.save_counts.iter().map(|row| row[i]).sum();
            out.push_str(&format!(",{total}"));
        }
        out.push('\n');
        out
    }

    /// Per-cell detail CSV.
    pub fn site_costs_csv(&self) -> String {
        let mut out = String::from(
            "site,tariff,strategy,cost_c,load_kwh,cost_c_per_kwh,hours,fallback_hours,pv_load_ratio\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{},{},{:.6}\n",
                c.site_id,
                c.tariff,
                c.strategy.name(),
                c.report.total_cost_c,
                c.report.total_load_kwh,
                c.report.cost_c_per_kwh,
                c.report.hours_simulated,
                c.report.hours_automatic_fallback,
                c.pv_load_ratio
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::HourlyRecord;
    use chrono::{DateTime, Duration, FixedOffset};

    fn ts(s: &str) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn tiny_dataset(site: &str) -> InverterDataset {
        let start = ts("2018-07-02T00:00:00+10:00");
        let records: Vec<_> = (0..7 * 24)
            .map(|i| {
                let h = i % 24;
                HourlyRecord {
                    timestamp: start + Duration::hours(i),
                    load_kwh: if (17..22).contains(&h) { 1.0 } else { 0.35 },
                    pv_kwh: if (8..16).contains(&h) { 0.9 } else { 0.0 },
                    present: true,
                }
            })
            .collect();
        InverterDataset::new(site, 600, records).unwrap()
    }

    #[test]
    fn smallest_grid_has_save_count() {
        let datasets = vec![tiny_dataset("a")];
        let tariffs = vec![crate::tariff::bundled("tariff1").unwrap()];
        let strategies = vec![Strategy::Automatic, Strategy::Perfect];
        let req = MatrixRequest {
            datasets: &datasets,
            tariffs: &tariffs,
            strategies: &strategies,
            opts: SimOptions {
                force: true,
                ..SimOptions::default()
            },
            weighting: Weighting::LoadWeighted,
        };
        let result = simulate_matrix(&req).unwrap();
        assert_eq!(result.cost_grid.len(), 1);
        assert_eq!(result.cost_grid[0].len(), 2);
        // Automatic never beats itself.
        assert_eq!(result.save_counts[0][0], 0);
        assert!(result.save_counts[0][1] <= 1);
        let csv = result.costs_csv();
        assert!(csv.starts_with("tariff,automatic,perfect\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn deterministic_grid() {
        let datasets = vec![tiny_dataset("a"), tiny_dataset("b")];
        let tariffs = vec![
            crate::tariff::bundled("tariff1").unwrap(),
            crate::tariff::bundled("tariff6").unwrap(),
        ];
        let strategies = vec![Strategy::Automatic, Strategy::Q6040, Strategy::Perfect];
        let req = MatrixRequest {
            datasets: &datasets,
            tariffs: &tariffs,
            strategies: &strategies,
            opts: SimOptions {
                force: true,
                seed: 11,
                ..SimOptions::default()
            },
            weighting: Weighting::LoadWeighted,
        };
        let a = simulate_matrix(&req).unwrap();
        let b = simulate_matrix(&req).unwrap();
        assert_eq!(a.costs_csv(), b.costs_csv());
        assert_eq!(a.savecounts_csv(), b.savecounts_csv());
        assert_eq!(a.site_costs_csv(), b.site_costs_csv());
    }
}
