//! Bounded-variable primal simplex.
//!
//! Revised form with an explicit dense basis inverse updated by elementary
//! row operations. Pricing is partial Dantzig: columns are scanned in fixed
//! segments, cyclically, and the largest reduced cost of the first segment
//! with any improving column enters. After a run of degenerate pivots the
//! solver switches to Bland's rule until the objective moves again, which
//! rules out cycling. Phase 1 minimizes
//! the sum of artificial variables added only for rows whose slack cannot
//! start basic and feasible.

use std::fmt;

const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 20;
const RECOMPUTE_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub entries: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// `max c·x` subject to rows and `lower ≤ x ≤ upper`. Lower bounds must be
/// finite; upper bounds may be `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Index of a row that cannot be satisfied.
    Infeasible {
        row: usize,
    },
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpError(pub String);

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "simplex failure: {}", self.0)
    }
}

impl std::error::Error for LpError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    /// Sparse columns over kept rows: structural, then slacks, then artificials.
    columns: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    /// Row-major `m × m`.
    binv: Vec<f64>,
    artificial_start: usize,
    /// Kept row position → original row index.
    row_origin: Vec<usize>,
    iterations: usize,
    iteration_limit: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn build(problem: &LpProblem, kept: Vec<usize>) -> Result<Self, LpError> {
        let n = problem.num_vars();
        let m = kept.len();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (pos, &r) in kept.iter().enumerate() {
            for &(j, a) in &problem.rows[r].entries {
                if j >= n {
                    return Err(LpError(format!("row {r} references variable {j}")));
                }
                if a != 0.0 {
                    columns[j].push((pos, a));
                }
            }
        }
        let mut lo = problem.lower.clone();
        let mut hi = problem.upper.clone();
        let mut x = lo.clone();
        let mut status = vec![Status::AtLower; n];
        for j in 0..n {
            if !lo[j].is_finite() {
                return Err(LpError(format!("variable {j} has no finite lower bound")));
            }
            if hi[j] < lo[j] {
                return Err(LpError(format!("variable {j} has empty bounds")));
            }
        }

        // Residual of each row with structurals at their lower bounds.
        let mut rhs = Vec::with_capacity(m);
        let mut residual = Vec::with_capacity(m);
        for &r in &kept {
            let row = &problem.rows[r];
            let activity: f64 = row.entries.iter().map(|&(j, a)| a * lo[j]).sum();
            rhs.push(row.rhs);
            residual.push(row.rhs - activity);
        }

        let mut basis = vec![usize::MAX; m];
        let mut basis_sign = vec![1.0; m];
        // Slacks: `≤` rows get +s, `≥` rows get −s, s ∈ [0, ∞).
        for (pos, &r) in kept.iter().enumerate() {
            let coef = match problem.rows[r].sense {
                RowSense::Le => 1.0,
                RowSense::Ge => -1.0,
                RowSense::Eq => continue,
            };
            let j = columns.len();
            columns.push(vec![(pos, coef)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            let value = residual[pos] * coef;
            if value >= -FEAS_TOL {
                x.push(value.max(0.0));
                status.push(Status::Basic(pos));
                basis[pos] = j;
                basis_sign[pos] = coef;
            } else {
                x.push(0.0);
                status.push(Status::AtLower);
            }
        }
        let artificial_start = columns.len();
        for pos in 0..m {
            if basis[pos] != usize::MAX {
                continue;
            }
            let coef = if residual[pos] < 0.0 { -1.0 } else { 1.0 };
            let j = columns.len();
            columns.push(vec![(pos, coef)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(residual[pos].abs());
            status.push(Status::Basic(pos));
            basis[pos] = j;
            basis_sign[pos] = coef;
        }

        let mut binv = vec![0.0; m * m];
        for pos in 0..m {
            binv[pos * m + pos] = basis_sign[pos];
        }
        let total = columns.len();
        Ok(Tableau {
            m,
            columns,
            rhs,
            lo,
            hi,
            x,
            status,
            basis,
            binv,
            artificial_start,
            row_origin: kept,
            iterations: 0,
            iteration_limit: 50_000 + 50 * (total + m),
        })
    }

    fn has_artificials(&self) -> bool {
        self.artificial_start < self.columns.len()
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &b) in self.basis.iter().enumerate() {
            let c = cost[b];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, &v) in y.iter_mut().zip(row) {
                    *yk += c * v;
                }
            }
        }
        y
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh_basics(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for (j, col) in self.columns.iter().enumerate() {
            if matches!(self.status[j], Status::Basic(_)) || self.x[j] == 0.0 {
                continue;
            }
            for &(r, a) in col {
                resid[r] -= a * self.x[j];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&resid).map(|(a, b)| a * b).sum();
            self.x[self.basis[r]] = v;
        }
    }

    /// Reduced cost of `j` if moving it off its bound improves the objective.
    fn improving(&self, j: usize, cost: &[f64], y: &[f64]) -> Option<f64> {
        let st = self.status[j];
        if matches!(st, Status::Basic(_)) || self.hi[j] <= self.lo[j] {
            return None;
        }
        let d = cost[j] - self.columns[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>();
        let ok = match st {
            Status::AtLower => d > DUAL_TOL,
            Status::AtUpper => d < -DUAL_TOL,
            Status::Basic(_) => false,
        };
        ok.then_some(d)
    }

    /// Scans segments cyclically from `cursor`; returns the largest |d| in the
    /// first segment holding any improving column (earliest on ties).
    fn price_partial(
        &self,
        cost: &[f64],
        y: &[f64],
        cursor: &mut usize,
        segment: usize,
    ) -> Option<(usize, f64)> {
        let total = self.columns.len();
        let mut best: Option<(usize, f64)> = None;
        let mut j = *cursor;
        let mut scanned = 0;
        while scanned < total {
            let end = (scanned + segment).min(total);
            while scanned < end {
                if let Some(d) = self.improving(j, cost, y) {
                    if best.is_none_or(|(_, b)| d.abs() > b.abs()) {
                        best = Some((j, d));
                    }
                }
                j = if j + 1 == total { 0 } else { j + 1 };
                scanned += 1;
            }
            if best.is_some() {
                break;
            }
        }
        *cursor = j;
        best
    }

    fn run(&mut self, cost: &[f64]) -> Result<PhaseEnd, LpError> {
        let m = self.m;
        let total = self.columns.len();
        let mut y = self.duals(cost);
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut alpha = vec![0.0; m];
        let mut pivot_nz: Vec<(usize, f64)> = Vec::with_capacity(m);
        let mut since_refresh = 0usize;
        let mut cursor = 0usize;
        let segment = ((total as f64).sqrt() as usize * 4).max(64);

        loop {
            if since_refresh >= RECOMPUTE_EVERY {
                self.refresh_basics();
                y = self.duals(cost);
                since_refresh = 0;
            }

            let entering = if bland {
                (0..total).find_map(|j| self.improving(j, cost, &y).map(|d| (j, d)))
            } else {
                self.price_partial(cost, &y, &mut cursor, segment)
            };
            let Some((q, d_q)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            self.iterations += 1;
            since_refresh += 1;
            if self.iterations > self.iteration_limit {
                return Err(LpError(format!(
                    "iteration limit {} exceeded",
                    self.iteration_limit
                )));
            }

            // alpha = B^-1 a_q
            for (i, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[i * m..(i + 1) * m];
                *a = self.columns[q].iter().map(|&(r, v)| row[r] * v).sum();
            }
            let delta = if self.status[q] == Status::AtLower {
                1.0
            } else {
                -1.0
            };

            // Ratio test. `None` in `leave` means a bound flip of the entering variable.
            let mut step = self.hi[q] - self.lo[q];
            let mut leave: Option<usize> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let rate = -delta * a;
                let limit = if rate < 0.0 {
                    (self.x[b] - self.lo[b]) / -rate
                } else if self.hi[b].is_finite() {
                    (self.hi[b] - self.x[b]) / rate
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    _ if limit < step - FEAS_TOL => true,
                    _ if limit > step + FEAS_TOL => false,
                    // Tie with a bound flip: keep the flip.
                    None => false,
                    Some(prev) => {
                        if bland {
                            b < self.basis[prev]
                        } else {
                            a.abs() > alpha[prev].abs()
                        }
                    }
                };
                if better {
                    step = limit;
                    leave = Some(i);
                }
            }
            if !step.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }

            if step <= FEAS_TOL {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }

            self.x[q] += delta * step;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= delta * step * a;
                }
            }

            match leave {
                None => {
                    self.status[q] = if delta > 0.0 {
                        self.x[q] = self.hi[q];
                        Status::AtUpper
                    } else {
                        self.x[q] = self.lo[q];
                        Status::AtLower
                    };
                }
                Some(r) => {
                    let b = self.basis[r];
                    let rate = -delta * alpha[r];
                    self.status[b] = if rate < 0.0 {
                        self.x[b] = self.lo[b];
                        Status::AtLower
                    } else {
                        self.x[b] = self.hi[b];
                        Status::AtUpper
                    };
                    self.basis[r] = q;
                    self.status[q] = Status::Basic(r);

                    let pivot = alpha[r];
                    let (before, rest) = self.binv.split_at_mut(r * m);
                    let (pivot_row, after) = rest.split_at_mut(m);
                    // Network bases keep B^-1 sparse; only touch its nonzeros.
                    pivot_nz.clear();
                    for (k, v) in pivot_row.iter_mut().enumerate() {
                        if *v != 0.0 {
                            *v /= pivot;
                            pivot_nz.push((k, *v));
                        }
                    }
                    for (i, &a) in alpha.iter().enumerate() {
                        if i == r || a == 0.0 {
                            continue;
                        }
                        let row = if i < r {
                            &mut before[i * m..(i + 1) * m]
                        } else {
                            &mut after[(i - r - 1) * m..(i - r) * m]
                        };
                        for &(k, v) in &pivot_nz {
                            row[k] -= a * v;
                        }
                    }
                    for &(k, v) in &pivot_nz {
                        y[k] += d_q * v;
                    }
                }
            }
        }
    }
}

/// Drops rows that cannot bind given the variable bounds and reports rows that
/// can never be satisfied.
fn presolve(problem: &LpProblem) -> Result<Vec<usize>, usize> {
    let mut kept = Vec::new();
    for (r, row) in problem.rows.iter().enumerate() {
        let (mut min_act, mut max_act) = (0.0, 0.0);
        for &(j, a) in &row.entries {
            let (l, u) = (problem.lower[j], problem.upper[j]);
            if a >= 0.0 {
                min_act += a * l;
                max_act += a * u;
            } else {
                min_act += a * u;
                max_act += a * l;
            }
        }
        let slack = FEAS_TOL * (1.0 + row.rhs.abs());
        let (satisfied, impossible) = match row.sense {
            RowSense::Le => (max_act <= row.rhs, min_act > row.rhs + slack),
            RowSense::Ge => (min_act >= row.rhs, max_act < row.rhs - slack),
            RowSense::Eq => (
                min_act == row.rhs && max_act == row.rhs,
                min_act > row.rhs + slack || max_act < row.rhs - slack,
            ),
        };
        if impossible {
            return Err(r);
        }
        if !satisfied {
            kept.push(r);
        }
    }
    Ok(kept)
}

/// Solves the LP relaxation to optimality.
pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome, LpError> {
    let n = problem.num_vars();
    if problem.lower.len() != n || problem.upper.len() != n {
        return Err(LpError(
            "bound vectors do not match objective length".into(),
        ));
    }
    let kept = match presolve(problem) {
        Ok(kept) => kept,
        Err(row) => return Ok(LpOutcome::Infeasible { row }),
    };
    let mut t = Tableau::build(problem, kept)?;
    let total = t.columns.len();

    if t.has_artificials() {
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(t.artificial_start) {
            *c = -1.0;
        }
        t.run(&cost)?;
        t.refresh_basics();
        let mut worst: Option<(usize, f64)> = None;
        for j in t.artificial_start..total {
            let v = t.x[j];
            if v > FEAS_TOL * 1e3 && worst.is_none_or(|(_, w)| v > w) {
                worst = Some((j, v));
            }
        }
        if let Some((j, _)) = worst {
            let pos = t.columns[j][0].0;
            return Ok(LpOutcome::Infeasible {
                row: t.row_origin[pos],
            });
        }
        for j in t.artificial_start..total {
            t.hi[j] = 0.0;
            if !matches!(t.status[j], Status::Basic(_)) {
                t.x[j] = 0.0;
            }
        }
    }

    let scale = problem
        .objective
        .iter()
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    let mut cost = vec![0.0; total];
    if scale > 0.0 {
        for (c, &o) in cost.iter_mut().zip(&problem.objective) {
            *c = o / scale;
        }
    }
    if let PhaseEnd::Unbounded = t.run(&cost)? {
        return Ok(LpOutcome::Unbounded);
    }
    t.refresh_basics();

    let values: Vec<f64> = t.x[..n]
        .iter()
        .zip(problem.lower.iter().zip(&problem.upper))
        .map(|(&v, (&l, &u))| v.clamp(l, u))
        .collect();
    let objective = values
        .iter()
        .zip(&problem.objective)
        .map(|(v, c)| v * c)
        .sum();
    Ok(LpOutcome::Optimal(LpSolution {
        values,
        objective,
        iterations: t.iterations,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(entries: &[(usize, f64)], sense: RowSense, rhs: f64) -> LpRow {
        LpRow {
            entries: entries.to_vec(),
            sense,
            rhs,
        }
    }

    fn optimal(p: &LpProblem) -> LpSolution {
        match solve_lp(p).unwrap() {
            LpOutcome::Optimal(s) => s,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_two_variable() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let p = LpProblem {
            objective: vec![3.0, 5.0],
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
            rows: vec![
                row(&[(0, 1.0)], RowSense::Le, 4.0),
                row(&[(1, 2.0)], RowSense::Le, 12.0),
                row(&[(0, 3.0), (1, 2.0)], RowSense::Le, 18.0),
            ],
        };
        let s = optimal(&p);
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.values[0] - 2.0).abs() < 1e-9);
        assert!((s.values[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn upper_bounds_flip() {
        let p = LpProblem {
            objective: vec![1.0, 2.0],
            lower: vec![0.0; 2],
            upper: vec![3.0, 4.0],
            rows: vec![],
        };
        let s = optimal(&p);
        assert_eq!(s.values, vec![3.0, 4.0]);
        assert_eq!(s.objective, 11.0);
    }

    #[test]
    fn ge_rows_need_phase_one() {
        // max -x - y, x + y ≥ 3, x ≤ 2 → objective -3
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            lower: vec![0.0; 2],
            upper: vec![2.0, 10.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], RowSense::Ge, 3.0)],
        };
        let s = optimal(&p);
        assert!((s.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_nonzero_lower_bounds() {
        // max x + 2y, x + y = 5, x ≥ 2, y ≤ 2 → x=3, y=2, 7
        let p = LpProblem {
            objective: vec![1.0, 2.0],
            lower: vec![2.0, 0.0],
            upper: vec![10.0, 2.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], RowSense::Eq, 5.0)],
        };
        let s = optimal(&p);
        assert!((s.objective - 7.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_rows_are_named() {
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            lower: vec![0.0; 2],
            upper: vec![1.0, 1.0],
            rows: vec![
                row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 1.0),
                row(&[(0, 1.0)], RowSense::Ge, 1.0),
                row(&[(1, 1.0)], RowSense::Ge, 1.0),
            ],
        };
        assert!(matches!(
            solve_lp(&p).unwrap(),
            LpOutcome::Infeasible { .. }
        ));

        let p = LpProblem {
            objective: vec![1.0],
            lower: vec![0.0],
            upper: vec![1.0],
            rows: vec![row(&[(0, 1.0)], RowSense::Ge, 2.0)],
        };
        assert_eq!(solve_lp(&p).unwrap(), LpOutcome::Infeasible { row: 0 });
    }

    #[test]
    fn unbounded_detected() {
        let p = LpProblem {
            objective: vec![1.0],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
            rows: vec![row(&[(0, 1.0)], RowSense::Ge, 1.0)],
        };
        assert_eq!(solve_lp(&p).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn fractional_vertex() {
        // max x + y, 2x + 2y ≤ 3 → 1.5
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            lower: vec![0.0; 2],
            upper: vec![10.0; 2],
            rows: vec![row(&[(0, 2.0), (1, 2.0)], RowSense::Le, 3.0)],
        };
        assert!((optimal(&p).objective - 1.5).abs() < 1e-9);
    }

    #[test]
    fn empty_problem() {
        let p = LpProblem {
            objective: vec![],
            lower: vec![],
            upper: vec![],
            rows: vec![],
        };
        assert_eq!(optimal(&p).objective, 0.0);
    }
}
