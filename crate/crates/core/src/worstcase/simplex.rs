//! Dense two-phase simplex for `maximize cᵀx subject to Ax = b, x ≥ 0`.
//!
//! Small and deliberately plain: a full tableau, Bland's rule for both the
//! entering and the leaving variable, and a fixed pivot tolerance. It exists
//! to cross-check the closed-form worst case, not to be a general LP solver.

use thiserror::Error;

/// Pivot elements and reduced costs smaller than this are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Largest column count accepted by [`simplex_solve`].
pub const MAX_COLUMNS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("instance has {0} columns, limit is {MAX_COLUMNS}")]
    TooLarge(usize),
    #[error("constraint matrix is malformed: {0}")]
    Malformed(String),
    #[error("instance is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("objective is unbounded along column {0}")]
    Unbounded(usize),
    #[error("no optimum after {0} pivots")]
    IterationLimit(usize),
}

/// Equality-form linear program, maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    pub fn support(&self) -> Vec<usize> {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > PIVOT_TOLERANCE)
            .map(|(i, _)| i)
            .collect()
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// reduced costs; the last entry holds minus the current objective
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.rows[row][self.width]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        self.rows[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                r.iter_mut()
                    .zip(&pivot_row)
                    .for_each(|(v, pv)| *v -= f * pv);
                r[col] = 0.0;
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            self.cost
                .iter_mut()
                .zip(&pivot_row)
                .for_each(|(v, pv)| *v -= f * pv);
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn set_costs(&mut self, c: &[f64]) {
        self.cost = vec![0.0; self.width + 1];
        self.cost[..c.len()].copy_from_slice(c);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = if b < c.len() { c[b] } else { 0.0 };
            if cb != 0.0 {
                for (v, rv) in self.cost.iter_mut().zip(&self.rows[i]) {
                    *v -= cb * rv;
                }
            }
        }
    }

    /// Run Bland-rule iterations over columns `0..allowed`.
    fn optimize(
        &mut self,
        allowed: usize,
        pivots: &mut usize,
        limit: usize,
    ) -> Result<(), LpError> {
        loop {
            let Some(col) = (0..allowed).find(|&j| self.cost[j] > PIVOT_TOLERANCE) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > PIVOT_TOLERANCE {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((best, r)) => {
                            if ratio < r - PIVOT_TOLERANCE
                                || (ratio <= r + PIVOT_TOLERANCE
                                    && self.basis[i] < self.basis[best])
                            {
                                Some((i, ratio))
                            } else {
                                Some((best, r))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded(col));
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > limit {
                return Err(LpError::IterationLimit(*pivots));
            }
        }
    }
}

/// Solve `maximize cᵀx, Ax = b, x ≥ 0`, returning the optimum and a basic
/// (vertex) solution.
pub fn simplex_solve(instance: &LpInstance) -> Result<LpSolution, LpError> {
    let n = instance.objective.len();
    let m = instance.constraints.len();
    if n > MAX_COLUMNS {
        return Err(LpError::TooLarge(n));
    }
    if m == 0 || instance.rhs.len() != m {
        return Err(LpError::Malformed(format!(
            "{m} constraint rows but {} right-hand sides",
            instance.rhs.len()
        )));
    }
    if let Some(bad) = instance.constraints.iter().position(|r| r.len() != n) {
        return Err(LpError::Malformed(format!(
            "row {bad} has {} entries, expected {n}",
            instance.constraints[bad].len()
        )));
    }

    // columns: originals 0..n, artificials n..n+m, then the right-hand side
    let width = n + m;
    let rows: Vec<Vec<f64>> = instance
        .constraints
        .iter()
        .zip(&instance.rhs)
        .enumerate()
        .map(|(i, (row, &b))| {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let mut r: Vec<f64> = row.iter().map(|v| sign * v).collect();
            r.resize(width + 1, 0.0);
            r[n + i] = 1.0;
            r[width] = sign * b;
            r
        })
        .collect();
    let mut tableau = Tableau {
        rows,
        cost: Vec::new(),
        basis: (n..n + m).collect(),
        width,
    };
    let limit = 50 * (n + m);
    let mut pivots = 0;

    // phase one: maximize -Σ artificials
    let mut phase_one = vec![0.0; width];
    phase_one[n..].iter_mut().for_each(|v| *v = -1.0);
    tableau.set_costs(&phase_one);
    tableau.optimize(width, &mut pivots, limit)?;
    let residual: f64 = tableau
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= n)
        .map(|(i, _)| tableau.rhs(i))
        .sum();
    let scale = 1.0 + instance.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if residual > PIVOT_TOLERANCE * scale {
        return Err(LpError::Infeasible(residual));
    }

    // drive zero-level artificials out of the basis; drop redundant rows
    let mut row = 0;
    while row < tableau.rows.len() {
        if tableau.basis[row] >= n {
            match (0..n).find(|&j| tableau.rows[row][j].abs() > PIVOT_TOLERANCE) {
                Some(col) => {
                    tableau.pivot(row, col);
                    pivots += 1;
                }
                None => {
                    tableau.rows.remove(row);
                    tableau.basis.remove(row);
                    continue;
                }
            }
        }
        row += 1;
    }

    tableau.set_costs(&instance.objective);
    tableau.optimize(n, &mut pivots, limit)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tableau.basis.iter().enumerate() {
        if b < n {
            x[b] = tableau.rhs(i);
        }
    }
    let objective = instance.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        objective,
        x,
        pivots,
    })
}
