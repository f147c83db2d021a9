//! Dense two-phase bounded-variable simplex.
//!
//! Sized for the dispatch programs this crate builds: a few hundred
//! variables, under a hundred equality rows. The tableau is kept in full,
//! entering variables are picked by the most-negative reduced cost with a
//! Bland fallback after long degenerate runs, and all tie-breaks are by
//! lowest index, so repeated solves of the same problem are bit-identical.

/// Optimality / feasibility tolerance on reduced costs and residuals.
const TOL: f64 = 1e-9;
/// Minimum acceptable pivot magnitude.
const PIVOT_TOL: f64 = 1e-8;
/// Steps smaller than this count as degenerate.
const DEGEN_TOL: f64 = 1e-12;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGEN_LIMIT: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimplexError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl std::fmt::Display for SimplexError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimplexError::Infeasible => write!(f, "problem is infeasible"),
            SimplexError::Unbounded => write!(f, "problem is unbounded"),
            SimplexError::IterationLimit => write!(f, "iteration limit exceeded"),
        }
    }
}

impl std::error::Error for SimplexError {}

/// `minimize c'x  s.t.  A x = b,  lower <= x <= upper` with upper bounds
/// allowed to be infinite. Rows are given sparse; the solver densifies.
#[derive(Debug, Clone, Default)]
pub struct Problem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Problem {
    /// Add a variable, returning its column index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        debug_assert!(lower <= upper);
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    /// Add an equality row `sum coeffs = rhs`.
    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((coeffs, rhs));
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn solve(&self) -> Result<Solution, SimplexError> {
        Tableau::new(self).solve()
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    #[allow(dead_code)] // read by callers that report the raw objective
    pub objective: f64,
}

struct Tableau {
    m: usize,
    /// Structural variable count; columns n..n+m are artificials.
    n: usize,
    ncols: usize,
    /// Row-major m x ncols.
    tab: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Current value of every variable.
    x: Vec<f64>,
    /// Basic variable per row.
    basic: Vec<usize>,
    /// Column -> row if basic, usize::MAX otherwise.
    in_basis: Vec<usize>,
    /// Reduced-cost row for the active phase.
    dj: Vec<f64>,
    degen_run: usize,
}

impl Tableau {
    fn new(p: &Problem) -> Self {
        let m = p.rows.len();
        let n = p.num_vars();
        let ncols = n + m;
        let mut tab = vec![0.0; m * ncols];
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut x = p.lower.clone();
        let mut basic = Vec::with_capacity(m);
        let mut in_basis = vec![usize::MAX; ncols];

        // Start all structural variables at their (finite) lower bound and
        // cover each row's residual with one artificial variable, giving an
        // identity starting basis.
        for (i, (coeffs, rhs)) in p.rows.iter().enumerate() {
            let row = &mut tab[i * ncols..(i + 1) * ncols];
            let mut residual = *rhs;
            for &(j, a) in coeffs {
                row[j] += a;
                residual -= a * x[j];
            }
            let sign = if residual < 0.0 { -1.0 } else { 1.0 };
            if sign < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            row[n + i] = 1.0;
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(residual.abs());
            basic.push(n + i);
            in_basis[n + i] = i;
        }

        Tableau {
            m,
            n,
            ncols,
            tab,
            lower,
            upper,
            cost: p.cost.clone(),
            x,
            basic,
            in_basis,
            dj: vec![0.0; ncols],
            degen_run: 0,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.tab[i * self.ncols..(i + 1) * self.ncols]
    }

    fn reset_reduced_costs(&mut self, phase_cost: &[f64]) {
        self.dj.copy_from_slice(phase_cost);
        for i in 0..self.m {
            let cb = phase_cost[self.basic[i]];
            if cb != 0.0 {
                let row = &self.tab[i * self.ncols..(i + 1) * self.ncols];
                for (d, &a) in self.dj.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    fn solve(mut self) -> Result<Solution, SimplexError> {
        // Phase 1: minimize the sum of artificials.
        let mut phase_cost = vec![0.0; self.ncols];
        for j in self.n..self.ncols {
            phase_cost[j] = 1.0;
        }
        self.reset_reduced_costs(&phase_cost);
        self.run(self.ncols)?;
        let infeasibility: f64 = (self.n..self.ncols).map(|j| self.x[j]).sum();
        if infeasibility > 1e-7 {
            return Err(SimplexError::Infeasible);
        }
        // Pin artificials at zero so phase 2 cannot reuse them; pivot basic
        // ones out where a structural pivot exists.
        self.evict_artificials();
        for j in self.n..self.ncols {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
            self.x[j] = 0.0;
        }

        // Phase 2: the real objective over structural columns only.
        let mut phase_cost = vec![0.0; self.ncols];
        phase_cost[..self.n].copy_from_slice(&self.cost);
        self.reset_reduced_costs(&phase_cost);
        self.degen_run = 0;
        self.run(self.n)?;

        let mut x = self.x[..self.n].to_vec();
        for (j, v) in x.iter_mut().enumerate() {
            if (*v - self.lower[j]).abs() < TOL {
                *v = self.lower[j];
            } else if self.upper[j].is_finite() && (*v - self.upper[j]).abs() < TOL {
                *v = self.upper[j];
            }
        }
        let objective = x.iter().zip(&self.cost).map(|(v, c)| v * c).sum();
        Ok(Solution { x, objective })
    }

    /// Pivot any basic artificial (value ~0 after phase 1) out of the basis
    /// if some structural column in its row has a usable pivot.
    fn evict_artificials(&mut self) {
        for i in 0..self.m {
            if self.basic[i] < self.n {
                continue;
            }
            let pivot_col = (0..self.n)
                .filter(|&j| self.in_basis[j] == usize::MAX)
                .find(|&j| self.row(i)[j].abs() > PIVOT_TOL);
            if let Some(j) = pivot_col {
                self.pivot(i, j);
                // Degenerate swap: entering variable keeps its current value.
            }
        }
    }

    fn run(&mut self, active_cols: usize) -> Result<(), SimplexError> {
        let max_iters = 200 * (self.m + self.ncols);
        for _ in 0..max_iters {
            let entering = self.choose_entering(active_cols);
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            self.step(j, dir)?;
        }
        Err(SimplexError::IterationLimit)
    }

    /// Pick the entering column and its direction (+1 from lower bound,
    /// -1 from upper). Dantzig rule normally, Bland after degenerate runs.
    fn choose_entering(&self, active_cols: usize) -> Option<(usize, f64)> {
        let bland = self.degen_run >= DEGEN_LIMIT;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..active_cols {
            if self.in_basis[j] != usize::MAX || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.dj[j];
            let at_lower = (self.x[j] - self.lower[j]).abs() <= TOL;
            let (dir, score) = if at_lower && d < -TOL {
                (1.0, -d)
            } else if !at_lower && d > TOL {
                (-1.0, d)
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            match best {
                Some((_, _, s)) if s >= score => {}
                _ => best = Some((j, dir, score)),
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Move the entering variable as far as the first binding limit; either
    /// flip it to its other bound or pivot it into the basis.
    fn step(&mut self, j: usize, dir: f64) -> Result<(), SimplexError> {
        #[derive(PartialEq)]
        enum Limit {
            OwnBound,
            Row(usize, bool /* leaves at upper */),
        }

        let mut theta = self.upper[j] - self.lower[j]; // may be inf
        let mut limit = Limit::OwnBound;
        let mut best_pivot_mag = 0.0;

        for i in 0..self.m {
            let a = self.row(i)[j];
            let delta = dir * a;
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let k = self.basic[i];
            let v = self.x[k];
            // Basic value moves by -delta * theta.
            let (room, leaves_at_upper) = if delta > 0.0 {
                (v - self.lower[k], false)
            } else {
                if !self.upper[k].is_finite() {
                    continue;
                }
                (self.upper[k] - v, true)
            };
            let t = (room / delta.abs()).max(0.0);
            let better = t < theta - 1e-12
                || (t < theta + 1e-12
                    && matches!(limit, Limit::Row(..))
                    && delta.abs() > best_pivot_mag);
            if better {
                theta = t;
                limit = Limit::Row(i, leaves_at_upper);
                best_pivot_mag = delta.abs();
            }
        }

        if theta.is_infinite() {
            return Err(SimplexError::Unbounded);
        }
        if theta <= DEGEN_TOL {
            self.degen_run += 1;
        } else {
            self.degen_run = 0;
        }

        // Update variable values along the direction.
        self.x[j] += dir * theta;
        for i in 0..self.m {
            let a = self.tab[i * self.ncols + j];
            if a != 0.0 {
                let k = self.basic[i];
                self.x[k] -= dir * a * theta;
            }
        }

        match limit {
            Limit::OwnBound => {
                // Bound flip: snap exactly to the far bound.
                self.x[j] = if dir > 0.0 {
                    self.upper[j]
                } else {
                    self.lower[j]
                };
            }
            Limit::Row(r, leaves_at_upper) => {
                let leaving = self.basic[r];
                self.x[leaving] = if leaves_at_upper {
                    self.upper[leaving]
                } else {
                    self.lower[leaving]
                };
                self.pivot(r, j);
            }
        }
        Ok(())
    }

    /// Classic tableau pivot on (row, col), maintaining the reduced-cost row.
    fn pivot(&mut self, r: usize, j: usize) {
        let leaving = self.basic[r];
        self.in_basis[leaving] = usize::MAX;
        self.basic[r] = j;
        self.in_basis[j] = r;

        let ncols = self.ncols;
        let pivot = self.tab[r * ncols + j];
        debug_assert!(pivot.abs() > PIVOT_TOL * 0.01);
        let inv = 1.0 / pivot;
        for v in &mut self.tab[r * ncols..(r + 1) * ncols] {
            *v *= inv;
        }
        // Split borrows: copy the pivot row once, then eliminate.
        let pivot_row: Vec<f64> = self.tab[r * ncols..(r + 1) * ncols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.tab[i * ncols + j];
            if factor != 0.0 {
                let row = &mut self.tab[i * ncols..(i + 1) * ncols];
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[j] = 0.0;
            }
        }
        let dfactor = self.dj[j];
        if dfactor != 0.0 {
            for (d, &p) in self.dj.iter_mut().zip(&pivot_row) {
                *d -= dfactor * p;
            }
            self.dj[j] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn simple_bounded_min() {
        // min x + 2y  s.t. x + y = 1, 0 <= x <= 0.6, 0 <= y.
        let mut p = Problem::default();
        let x = p.add_var(1.0, 0.0, 0.6);
        let y = p.add_var(2.0, 0.0, INF);
        p.add_eq(vec![(x, 1.0), (y, 1.0)], 1.0);
        let s = p.solve().unwrap();
        assert!((s.x[x] - 0.6).abs() < 1e-9);
        assert!((s.x[y] - 0.4).abs() < 1e-9);
        assert!((s.objective - 1.4).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_and_costs() {
        // min -x  s.t. x - y = -2, 0 <= x <= 3, 0 <= y <= 10.
        let mut p = Problem::default();
        let x = p.add_var(-1.0, 0.0, 3.0);
        let y = p.add_var(0.0, 0.0, 10.0);
        p.add_eq(vec![(x, 1.0), (y, -1.0)], -2.0);
        let s = p.solve().unwrap();
        assert!((s.x[x] - 3.0).abs() < 1e-9);
        assert!((s.x[y] - 5.0).abs() < 1e-9);
        assert!((s.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x + y = 5 with x <= 1, y <= 1.
        let mut p = Problem::default();
        let x = p.add_var(1.0, 0.0, 1.0);
        let y = p.add_var(1.0, 0.0, 1.0);
        p.add_eq(vec![(x, 1.0), (y, 1.0)], 5.0);
        assert_eq!(p.solve().unwrap_err(), SimplexError::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x s.t. x - y = 0, both unbounded above.
        let mut p = Problem::default();
        let x = p.add_var(-1.0, 0.0, INF);
        let y = p.add_var(0.0, 0.0, INF);
        p.add_eq(vec![(x, 1.0), (y, -1.0)], 0.0);
        assert_eq!(p.solve().unwrap_err(), SimplexError::Unbounded);
    }

    #[test]
    fn nonzero_lower_bounds() {
        // min x + y s.t. x + y = 5, x in [2, 10], y in [1, 10].
        let mut p = Problem::default();
        let x = p.add_var(1.0, 2.0, 10.0);
        let y = p.add_var(1.0, 1.0, 10.0);
        p.add_eq(vec![(x, 1.0), (y, 1.0)], 5.0);
        let s = p.solve().unwrap();
        assert!((s.x[x] + s.x[y] - 5.0).abs() < 1e-9);
        assert!((s.objective - 5.0).abs() < 1e-9);
        assert!(s.x[x] >= 2.0 - 1e-9 && s.x[y] >= 1.0 - 1e-9);
    }

    #[test]
    fn deterministic_across_solves() {
        let build = || {
            let mut p = Problem::default();
            let a = p.add_var(3.0, 0.0, 4.0);
            let b = p.add_var(-1.0, 0.0, 2.0);
            let c = p.add_var(0.5, 0.5, INF);
            p.add_eq(vec![(a, 1.0), (b, 2.0), (c, -1.0)], 1.5);
            p.add_eq(vec![(a, 0.3), (c, 1.0)], 2.0);
            p
        };
        let s1 = build().solve().unwrap();
        let s2 = build().solve().unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.objective.to_bits(), s2.objective.to_bits());
    }
}
