//! Dense two-phase primal simplex with Bland's rule.
//!
//! Sized for the separability tests (a few hundred rows, a few dozen columns).
//! Bland's rule makes the pivot sequence, and therefore the returned vertex, a
//! deterministic function of the input.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize c^T x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("objective is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { objective, constraints: Vec::new(), max_iterations: 100_000 }
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self)?.run(self.objective.len(), &self.objective, self.max_iterations)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    n_cols: usize,
    artificial_start: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let n = lp.objective.len();
        if lp.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        let mut normalized = Vec::with_capacity(lp.constraints.len());
        for (i, c) in lp.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!("row {i} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} is not finite")));
            }
            let (coeffs, relation, rhs) = if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect::<Vec<_>>(), flipped, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            };
            normalized.push((coeffs, relation, rhs));
        }
        let n_slack = normalized.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let n_art = normalized.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let artificial_start = n + n_slack;
        let n_cols = artificial_start + n_art;

        let m = normalized.len();
        let mut rows = vec![vec![0.0; n_cols]; m];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, artificial_start);
        for (i, (coeffs, relation, b)) in normalized.into_iter().enumerate() {
            rows[i][..n].copy_from_slice(&coeffs);
            rhs[i] = b;
            match relation {
                Relation::Le => {
                    rows[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    rows[i][slack] = -1.0;
                    slack += 1;
                    rows[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    rows[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Ok(Self { rows, rhs, basis, n_cols, artificial_start })
    }

    fn pivot(&mut self, row: usize, col: usize, reduced: &mut [f64], value: &mut f64) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        self.rhs[row] /= p;
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row];
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let f = self.rows[i][col];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rows[i][col] = 0.0;
                self.rhs[i] -= f * pivot_rhs;
                if self.rhs[i] < 0.0 && self.rhs[i] > -FEAS_EPS {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = reduced[col];
        if f != 0.0 {
            for (v, pv) in reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            reduced[col] = 0.0;
            *value += f * pivot_rhs;
        }
        self.basis[row] = col;
    }

    /// Bland's rule iterations until optimal; columns at or past `col_limit` never enter.
    fn iterate(
        &mut self,
        reduced: &mut [f64],
        value: &mut f64,
        col_limit: usize,
        budget: usize,
        used: &mut usize,
    ) -> Result<(), LpError> {
        loop {
            let Some(col) = (0..col_limit).find(|&j| reduced[j] > COST_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            *used += 1;
            if *used > budget {
                return Err(LpError::IterationLimit(budget));
            }
            self.pivot(row, col, reduced, value);
        }
    }

    fn run(mut self, n: usize, objective: &[f64], budget: usize) -> Result<LpSolution, LpError> {
        let mut used = 0;

        // phase one: maximize -sum(artificials)
        if self.artificial_start < self.n_cols {
            let mut reduced = vec![0.0; self.n_cols];
            let mut value = 0.0;
            for (i, &b) in self.basis.iter().enumerate() {
                if b >= self.artificial_start {
                    for (j, r) in reduced.iter_mut().enumerate().take(self.artificial_start) {
                        *r += self.rows[i][j];
                    }
                    value -= self.rhs[i];
                }
            }
            self.iterate(&mut reduced, &mut value, self.artificial_start, budget, &mut used)?;
            if value < -FEAS_EPS {
                return Err(LpError::Infeasible(-value));
            }
            // drive zero-level artificials out of the basis or drop redundant rows
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.artificial_start {
                    match (0..self.artificial_start).find(|&j| self.rows[i][j].abs() > PIVOT_EPS) {
                        Some(col) => {
                            let mut dummy = vec![0.0; self.n_cols];
                            let mut dv = 0.0;
                            self.pivot(i, col, &mut dummy, &mut dv);
                        }
                        None => {
                            self.rows.remove(i);
                            self.rhs.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }

        // phase two
        let cost = |j: usize| if j < n { objective[j] } else { 0.0 };
        let mut reduced: Vec<f64> = (0..self.n_cols).map(cost).collect();
        let mut value = 0.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost(b);
            if cb != 0.0 {
                for (r, a) in reduced.iter_mut().zip(&self.rows[i]) {
                    *r -= cb * a;
                }
                value += cb * self.rhs[i];
            }
        }
        self.iterate(&mut reduced, &mut value, self.artificial_start, budget, &mut used)?;

        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs[i];
            }
        }
        let objective_value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective: objective_value, iterations: used })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0)
            .add(vec![0.0, 2.0], Relation::Le, 12.0)
            .add(vec![3.0, 2.0], Relation::Le, 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn needs_phase_one() {
        // max -x - y s.t. x + y >= 2, x - y = 0 -> (1, 1)
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add(vec![1.0, 1.0], Relation::Ge, 2.0).add(vec![1.0, -1.0], Relation::Eq, 0.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -3 means x >= 3; min x -> 3
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add(vec![-1.0], Relation::Le, -3.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![1.0], Relation::Le, 1.0).add(vec![1.0], Relation::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(LpError::Infeasible(_))));
        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add(vec![0.0, 1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example; Bland's rule must terminate at optimum 0.05
        let mut lp = LinearProgram::new(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
            .add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
            .add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 0.05).abs() < 1e-12, "{}", sol.objective);
    }

    #[test]
    fn redundant_equality_rows() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add(vec![1.0, 1.0], Relation::Eq, 1.0).add(vec![2.0, 2.0], Relation::Eq, 2.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}
