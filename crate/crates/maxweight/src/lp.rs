//! A small dense linear-program solver.
//!
//! Two-phase primal simplex on the standard form `min c'x, A x {<=,>=,=} b,
//! x >= 0`, sized for the desk-scale instances this crate produces (tens of
//! variables and rows). Bland's rule keeps the pivot sequence finite and
//! deterministic, which matters more here than speed: every geometric verdict
//! downstream must be reproducible.

use thiserror::Error;

/// Comparison tolerance for reduced costs and pivot eligibility.
const EPS: f64 = 1e-9;

/// Hard cap on simplex pivots; Bland's rule terminates long before this on
/// any instance this crate builds.
const MAX_PIVOTS: usize = 20_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex pivot limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Optimal values of the structural variables, in declaration order.
    pub x: Vec<f64>,
    /// Objective value in the caller's sense (max problems report the max).
    pub objective: f64,
}

/// Builder for a linear program over non-negative variables.
#[derive(Debug, Clone)]
pub struct Lp {
    num_vars: usize,
    objective: Vec<f64>,
    maximize: bool,
    rows: Vec<(Vec<f64>, Rel, f64)>,
}

impl Lp {
    pub fn minimize(objective: &[f64]) -> Self {
        Self {
            num_vars: objective.len(),
            objective: objective.to_vec(),
            maximize: false,
            rows: Vec::new(),
        }
    }

    pub fn maximize(objective: &[f64]) -> Self {
        Self {
            num_vars: objective.len(),
            objective: objective.to_vec(),
            maximize: true,
            rows: Vec::new(),
        }
    }

    /// A pure feasibility query: zero objective over `num_vars` variables.
    pub fn feasibility(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            maximize: false,
            rows: Vec::new(),
        }
    }

    pub fn constraint(&mut self, coeffs: &[f64], rel: Rel, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars, "constraint arity mismatch");
        self.rows.push((coeffs.to_vec(), rel, rhs));
        self
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    /// Canonical-form rows, `cols + 1` wide; last entry is the RHS.
    rows: Vec<Vec<f64>>,
    /// Basic variable of each row.
    basis: Vec<usize>,
    /// Columns `first_artificial..cols` are phase-1 artificials.
    first_artificial: usize,
    cols: usize,
}

impl Tableau {
    fn build(lp: &Lp) -> Self {
        let m = lp.rows.len();
        let n = lp.num_vars;
        // Count slack/surplus and artificial columns after sign normalization.
        let mut num_slack = 0;
        let mut num_artificial = 0;
        let mut normalized = Vec::with_capacity(m);
        for (coeffs, rel, rhs) in &lp.rows {
            let (coeffs, rel, rhs) = if *rhs < 0.0 {
                let flipped: Vec<f64> = coeffs.iter().map(|c| -c).collect();
                let rel = match rel {
                    Rel::Le => Rel::Ge,
                    Rel::Ge => Rel::Le,
                    Rel::Eq => Rel::Eq,
                };
                (flipped, rel, -rhs)
            } else {
                (coeffs.clone(), *rel, *rhs)
            };
            match rel {
                Rel::Le => num_slack += 1,
                Rel::Ge => {
                    num_slack += 1;
                    num_artificial += 1;
                }
                Rel::Eq => num_artificial += 1,
            }
            normalized.push((coeffs, rel, rhs));
        }

        let first_artificial = n + num_slack;
        let cols = first_artificial + num_artificial;
        let mut rows = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0usize; m];
        let mut slack_at = n;
        let mut artificial_at = first_artificial;
        for (i, (coeffs, rel, rhs)) in normalized.into_iter().enumerate() {
            rows[i][..n].copy_from_slice(&coeffs);
            rows[i][cols] = rhs;
            match rel {
                Rel::Le => {
                    rows[i][slack_at] = 1.0;
                    basis[i] = slack_at;
                    slack_at += 1;
                }
                Rel::Ge => {
                    rows[i][slack_at] = -1.0;
                    slack_at += 1;
                    rows[i][artificial_at] = 1.0;
                    basis[i] = artificial_at;
                    artificial_at += 1;
                }
                Rel::Eq => {
                    rows[i][artificial_at] = 1.0;
                    basis[i] = artificial_at;
                    artificial_at += 1;
                }
            }
        }

        Self {
            rows,
            basis,
            first_artificial,
            cols,
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let inv = 1.0 / self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced-cost row for objective `cost`, given the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut reduced = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for j in 0..self.cols {
                    reduced[j] -= cb * self.rows[i][j];
                }
            }
        }
        reduced
    }

    /// Run simplex to optimality for `cost`, considering only columns below
    /// `col_limit` as entering candidates (Bland's rule throughout).
    fn optimize(&mut self, cost: &[f64], col_limit: usize) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            let reduced = self.reduced_costs(cost);
            let entering = (0..col_limit).find(|&j| reduced[j] < -EPS);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > EPS {
                    let ratio = self.rows[i][self.cols] / a;
                    let better = match leaving {
                        None => true,
                        // Bland tie-break: smallest basic-variable index.
                        Some((best, r)) => {
                            ratio < r - EPS
                                || (ratio < r + EPS && self.basis[i] < self.basis[best])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(LpError::IterationLimit)
    }

    /// Remove artificials from the basis after phase 1, deleting rows that
    /// turn out redundant.
    fn clear_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.first_artificial {
                let col = (0..self.first_artificial)
                    .find(|&j| self.rows[i][j].abs() > EPS);
                match col {
                    Some(col) => self.pivot(i, col),
                    None => {
                        // 0 = 0 row: drop it.
                        self.rows.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn solve(mut self, lp: &Lp) -> Result<LpSolution, LpError> {
        let rhs_scale = self
            .rows
            .iter()
            .map(|r| r[self.cols].abs())
            .fold(1.0, f64::max);

        if self.first_artificial < self.cols {
            let mut phase1 = vec![0.0; self.cols];
            for c in phase1.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            self.optimize(&phase1, self.cols)?;
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.rows)
                .filter(|(&b, _)| b >= self.first_artificial)
                .map(|(_, row)| row[self.cols])
                .sum();
            if infeasibility > 1e-8 * rhs_scale {
                return Err(LpError::Infeasible);
            }
            self.clear_artificials();
        }

        let mut cost = vec![0.0; self.cols];
        for (j, c) in lp.objective.iter().enumerate() {
            cost[j] = if lp.maximize { -c } else { *c };
        }
        self.optimize(&cost, self.first_artificial)?;

        let mut x = vec![0.0; lp.num_vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < lp.num_vars {
                // Degenerate pivots can leave a basic value at -1e-12; clamp.
                x[b] = self.rows[i][self.cols].max(0.0);
            }
        }
        let objective = lp
            .objective
            .iter()
            .zip(&x)
            .map(|(c, v)| c * v)
            .sum::<f64>();
        Ok(LpSolution { x, objective })
    }
}

/// Solve the square system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when `a` is singular to working precision.
pub(crate) fn solve_linear_system(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[pivot_row][k].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(k, pivot_row);
        b.swap(k, pivot_row);
        for i in (k + 1)..n {
            let factor = a[i][k] / a[k][k];
            if factor != 0.0 {
                for j in k..n {
                    a[i][j] -= factor * a[k][j];
                }
                b[i] -= factor * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in (k + 1)..n {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_bounded_max() {
        let mut lp = Lp::maximize(&[3.0, 4.0]);
        lp.constraint(&[1.0, 1.0], Rel::Le, 20.0)
            .constraint(&[1.0, 0.0], Rel::Le, 10.0)
            .constraint(&[0.0, 1.0], Rel::Le, 12.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 72.0).abs() < 1e-9);
        assert!((sol.x[0] - 8.0).abs() < 1e-9);
        assert!((sol.x[1] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn solves_with_ge_and_eq() {
        let mut lp = Lp::minimize(&[1.0, 1.0]);
        lp.constraint(&[1.0, 2.0], Rel::Ge, 4.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);

        let mut lp = Lp::minimize(&[1.0, 1.0]);
        lp.constraint(&[1.0, 2.0], Rel::Ge, 4.0)
            .constraint(&[1.0, 1.0], Rel::Eq, 3.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = Lp::feasibility(1);
        lp.constraint(&[1.0], Rel::Le, 1.0)
            .constraint(&[1.0], Rel::Ge, 2.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = Lp::maximize(&[1.0, 0.0]);
        lp.constraint(&[0.0, 1.0], Rel::Le, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn negative_rhs_normalized() {
        // x >= 2 written as -x <= -2.
        let mut lp = Lp::minimize(&[1.0]);
        lp.constraint(&[-1.0], Rel::Le, -2.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn tolerates_redundant_equalities() {
        let mut lp = Lp::minimize(&[1.0, 1.0]);
        lp.constraint(&[1.0, 1.0], Rel::Eq, 2.0)
            .constraint(&[2.0, 2.0], Rel::Eq, 4.0)
            .constraint(&[1.0, 0.0], Rel::Ge, 0.5);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn feasibility_query_finds_point() {
        let mut lp = Lp::feasibility(3);
        lp.constraint(&[1.0, 1.0, 1.0], Rel::Eq, 1.0)
            .constraint(&[2.0, 1.0, 0.0], Rel::Ge, 1.2);
        let sol = lp.solve().unwrap();
        let mass: f64 = sol.x.iter().sum();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(2.0 * sol.x[0] + sol.x[1] >= 1.2 - 1e-9);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn degenerate_vertex_handled() {
        // Three constraints meet at (1,1); degenerate pivots must not cycle.
        let mut lp = Lp::maximize(&[1.0, 1.0]);
        lp.constraint(&[1.0, 0.0], Rel::Le, 1.0)
            .constraint(&[0.0, 1.0], Rel::Le, 1.0)
            .constraint(&[1.0, 1.0], Rel::Le, 2.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_solver_inverts() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_linear_system(a, vec![5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_linear_system(singular, vec![1.0, 2.0]).is_none());
    }
}
