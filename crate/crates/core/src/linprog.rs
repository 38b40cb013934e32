//! Dense two-phase simplex for small linear programs over free variables.
//!
//! Problems have the form `max/min c·μ  s.t.  A μ ≤ b` with `μ` unrestricted in
//! sign. Internally every variable is split as `μ = μ⁺ − μ⁻`, a slack is added
//! per row, and rows with a negative right-hand side receive an artificial
//! variable for phase I. Pivoting follows Bland's rule, so the method
//! terminates on degenerate problems without any perturbation.

use nalgebra::DMatrix;
use thiserror::Error;

/// Default pivot / zero tolerance.
pub const LP_TOL: f64 = 1e-9;

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `optimize objective·μ subject to constraint_matrix · μ ≤ constraint_rhs`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraint_matrix: DMatrix<f64>,
    pub constraint_rhs: Vec<f64>,
    pub sense: Sense,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        constraint_matrix: DMatrix<f64>,
        constraint_rhs: Vec<f64>,
        sense: Sense,
    ) -> Result<Self, LpError> {
        let lp = Self {
            objective,
            constraint_matrix,
            constraint_rhs,
            sense,
        };
        lp.check()?;
        Ok(lp)
    }

    pub fn maximize(objective: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>) -> Result<Self, LpError> {
        Self::new(objective, a, b, Sense::Maximize)
    }

    pub fn minimize(objective: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>) -> Result<Self, LpError> {
        Self::new(objective, a, b, Sense::Minimize)
    }

    fn check(&self) -> Result<(), LpError> {
        if self.constraint_matrix.nrows() != self.constraint_rhs.len() {
            return Err(LpError::DimensionMismatch {
                what: "constraint rows vs rhs length",
                expected: self.constraint_matrix.nrows(),
                found: self.constraint_rhs.len(),
            });
        }
        if self.constraint_matrix.ncols() != self.objective.len() {
            return Err(LpError::DimensionMismatch {
                what: "constraint columns vs objective length",
                expected: self.constraint_matrix.ncols(),
                found: self.objective.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub optimal_value: f64,
    pub optimizer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal_value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal(s) => Some(s.optimal_value),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch ({what}): expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("non-finite coefficient in linear program")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Pivot and zero tolerance.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: LP_TOL,
            max_iterations: 50_000,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    solve_with(lp, &LpOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpOutcome, LpError> {
    lp.check()?;
    if lp.objective.iter().any(|v| !v.is_finite())
        || lp.constraint_rhs.iter().any(|v| !v.is_finite())
        || lp.constraint_matrix.iter().any(|v| !v.is_finite())
    {
        return Err(LpError::NonFinite);
    }
    let sign = match lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let c: Vec<f64> = lp.objective.iter().map(|v| sign * v).collect();
    let mut tab = Tableau::build(&lp.constraint_matrix, &lp.constraint_rhs);
    match tab.optimize(&c, opts)? {
        Phase::Infeasible => Ok(LpOutcome::Infeasible),
        Phase::Unbounded => Ok(LpOutcome::Unbounded),
        Phase::Optimal => {
            let optimizer = tab.primal(c.len());
            let value: f64 = lp
                .objective
                .iter()
                .zip(&optimizer)
                .map(|(a, b)| a * b)
                .sum();
            Ok(LpOutcome::Optimal(LpSolution {
                optimal_value: value,
                optimizer,
            }))
        }
    }
}

/// Feasibility of `A μ ≤ b` alone.
pub fn is_feasible(a: &DMatrix<f64>, b: &[f64]) -> Result<bool, LpError> {
    let lp = LinearProgram::maximize(vec![0.0; a.ncols()], a.clone(), b.to_vec())?;
    Ok(!solve(&lp)?.is_infeasible())
}

enum Phase {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Row-major dense tableau. Column layout: `μ⁺ | μ⁻ | slack | artificial | rhs`.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    nvars: usize,
    first_artificial: usize,
    b_scale: f64,
}

impl Tableau {
    fn build(a: &DMatrix<f64>, b: &[f64]) -> Self {
        let rows = a.nrows();
        let nvars = a.ncols();
        let n_art = b.iter().filter(|v| **v < 0.0).count();
        let first_artificial = 2 * nvars + rows;
        let cols = first_artificial + n_art + 1;
        let mut data = vec![0.0; rows * cols];
        let mut basis = Vec::with_capacity(rows);
        let mut next_art = first_artificial;
        for i in 0..rows {
            let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
            let row = &mut data[i * cols..(i + 1) * cols];
            for j in 0..nvars {
                row[j] = flip * a[(i, j)];
                row[nvars + j] = -flip * a[(i, j)];
            }
            row[2 * nvars + i] = flip;
            row[cols - 1] = flip * b[i];
            if flip < 0.0 {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            } else {
                basis.push(2 * nvars + i);
            }
        }
        let b_scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        Self {
            rows,
            cols,
            data,
            basis,
            nvars,
            first_artificial,
            b_scale,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols - 1)
    }

    fn optimize(&mut self, c: &[f64], opts: &LpOptions) -> Result<Phase, LpError> {
        let mut iterations = 0;
        if self.first_artificial < self.cols - 1 {
            // Phase I: maximize −Σ artificials.
            let mut cost = vec![0.0; self.cols];
            for j in self.first_artificial..self.cols - 1 {
                cost[j] = -1.0;
            }
            let mut reduced = self.reduced_costs(&cost);
            self.iterate(&mut reduced, self.cols - 1, opts, &mut iterations)?;
            let infeasibility: f64 = (0..self.rows)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.rhs(i))
                .sum();
            let feas_tol = opts.tol * self.b_scale * 10.0;
            if infeasibility > feas_tol {
                return Ok(Phase::Infeasible);
            }
            self.evict_artificials(opts.tol);
        }
        let mut cost = vec![0.0; self.cols];
        for (j, &cj) in c.iter().enumerate() {
            cost[j] = cj;
            cost[self.nvars + j] = -cj;
        }
        let mut reduced = self.reduced_costs(&cost);
        let limit = self.first_artificial;
        if self.iterate(&mut reduced, limit, opts, &mut iterations)? {
            Ok(Phase::Optimal)
        } else {
            Ok(Phase::Unbounded)
        }
    }

    /// Reduced-cost row for the current basis; the last entry holds `−z`.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut red = cost.to_vec();
        red[self.cols - 1] = 0.0;
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                for (r, t) in red.iter_mut().zip(row) {
                    *r -= cb * t;
                }
            }
        }
        red
    }

    /// Bland's-rule primal simplex over columns `< col_limit`. Returns `false`
    /// on an unbounded ray.
    fn iterate(
        &mut self,
        reduced: &mut [f64],
        col_limit: usize,
        opts: &LpOptions,
        iterations: &mut usize,
    ) -> Result<bool, LpError> {
        let tol = opts.tol;
        let mut degenerate_run = 0;
        loop {
            // Largest reduced cost first; Bland's smallest index once pivots
            // stall, which rules out cycling.
            let candidate = if degenerate_run < DEGENERATE_RUN_LIMIT {
                (0..col_limit)
                    .filter(|&j| reduced[j] > tol)
                    .fold(None, |acc: Option<usize>, j| match acc {
                        Some(k) if reduced[k] >= reduced[j] => Some(k),
                        _ => Some(j),
                    })
            } else {
                (0..col_limit).find(|&j| reduced[j] > tol)
            };
            let Some(enter) = candidate else {
                return Ok(true);
            };
            let best = (0..self.rows)
                .filter(|&i| self.at(i, enter) > tol)
                .map(|i| self.rhs(i).max(0.0) / self.at(i, enter))
                .fold(f64::INFINITY, f64::min);
            if !best.is_finite() {
                return Ok(false);
            }
            // Bland: among minimum-ratio rows, the smallest basic index leaves.
            let cutoff = best + tol * (1.0 + best);
            let leave = (0..self.rows)
                .filter(|&i| {
                    let a = self.at(i, enter);
                    a > tol && self.rhs(i).max(0.0) / a <= cutoff
                })
                .min_by_key(|&i| self.basis[i])
                .expect("a row attains the minimum ratio");
            if best <= tol {
                degenerate_run += 1;
            } else if degenerate_run < DEGENERATE_RUN_LIMIT {
                degenerate_run = 0;
            }
            self.pivot(leave, enter, reduced);
            *iterations += 1;
            if *iterations > opts.max_iterations {
                return Err(LpError::IterationLimit(opts.max_iterations));
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize, reduced: &mut [f64]) {
        let cols = self.cols;
        let p = self.at(row, col);
        {
            let r = &mut self.data[row * cols..(row + 1) * cols];
            for v in r.iter_mut() {
                *v /= p;
            }
            r[col] = 1.0;
        }
        let pivot_row: Vec<f64> = self.data[row * cols..(row + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let f = self.data[i * cols + col];
            if f != 0.0 {
                let r = &mut self.data[i * cols..(i + 1) * cols];
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        let f = reduced[col];
        if f != 0.0 {
            for (v, pv) in reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            reduced[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Pivots zero-level artificials out of the basis; rows that cannot be
    /// pivoted are linearly redundant and are dropped.
    fn evict_artificials(&mut self, tol: f64) {
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.at(i, j).abs() > tol);
                match col {
                    Some(j) => {
                        let mut dummy = vec![0.0; self.cols];
                        self.pivot(i, j, &mut dummy);
                        i += 1;
                    }
                    None => {
                        self.data.drain(i * self.cols..(i + 1) * self.cols);
                        self.basis.remove(i);
                        self.rows -= 1;
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    fn primal(&self, nvars: usize) -> Vec<f64> {
        let mut x = vec![0.0; nvars];
        for i in 0..self.rows {
            let j = self.basis[i];
            if j < nvars {
                x[j] += self.rhs(i);
            } else if j < 2 * nvars {
                x[j - nvars] -= self.rhs(i);
            }
        }
        x
    }
}
