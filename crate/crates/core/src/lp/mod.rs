//! Linear programs, solutions and feasibility checks.

mod lpfile;
mod simplex;
#[cfg(test)]
mod tests;

pub use lpfile::{read_lp, write_lp};
pub use simplex::solve_lp;

use serde::{Deserialize, Serialize};

use crate::constraints::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// One linear row `sum coef * x  (sense)  rhs`. Coefficients are sparse `(variable, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub coefficients: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub provenance: Provenance,
}

impl ConstraintRow {
    pub fn le(coefficients: Vec<(usize, f64)>, rhs: f64, provenance: Provenance) -> Self {
        Self { coefficients, sense: Sense::Le, rhs, provenance }
    }

    pub fn ge(coefficients: Vec<(usize, f64)>, rhs: f64, provenance: Provenance) -> Self {
        Self { coefficients, sense: Sense::Ge, rhs, provenance }
    }

    pub fn eq(coefficients: Vec<(usize, f64)>, rhs: f64, provenance: Provenance) -> Self {
        Self { coefficients, sense: Sense::Eq, rhs, provenance }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Violation of the row at `x`, divided by the largest coefficient magnitude.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let scale = self.coefficients.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs())).max(1e-300);
        let lhs = self.activity(x);
        let v = match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        };
        if self.coefficients.is_empty() {
            v.max(0.0)
        } else {
            v.max(0.0) / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub direction: Direction,
    pub variables: Vec<Variable>,
    /// Dense objective, one entry per variable.
    pub objective: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
}

impl LinearProgram {
    pub fn new(direction: Direction) -> Self {
        Self { direction, variables: Vec::new(), objective: Vec::new(), rows: Vec::new() }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name: name.into(), lower, upper });
        self.objective.push(0.0);
        self.variables.len() - 1
    }

    pub fn add_row(&mut self, row: ConstraintRow) {
        self.rows.push(row);
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    /// Row multipliers in the sign convention of the original objective; empty unless optimal.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 1_000_000, feasibility_tol: 1e-7, optimality_tol: 1e-9 }
    }
}

/// Largest normalized violation of any row or bound at `x`.
pub fn validate(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for row in &lp.rows {
        worst = worst.max(row.violation(x));
    }
    for (v, &xi) in lp.variables.iter().zip(x) {
        worst = worst.max(v.lower - xi).max(xi - v.upper);
    }
    worst
}

/// Optimizes `lp`, then keeps the objective within `1e-7·(1+|opt|)` of the optimum and
/// maximizes `secondary` over the optimal face. Reported objective and duals refer to `lp`.
pub fn solve_lexicographic(lp: &LinearProgram, secondary: &[f64], opts: &SolverOptions) -> crate::Result<LpSolution> {
    let first = solve_lp(lp, opts)?;
    if first.status != LpStatus::Optimal {
        return Ok(first);
    }
    let mut second = lp.clone();
    let keep: Vec<(usize, f64)> = lp.objective.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect();
    let slack = 1e-7 * (1.0 + first.objective.abs());
    second.add_row(match lp.direction {
        Direction::Maximize => ConstraintRow::ge(keep, first.objective - slack, Provenance::default()),
        Direction::Minimize => ConstraintRow::le(keep, first.objective + slack, Provenance::default()),
    });
    second.direction = Direction::Maximize;
    second.objective = secondary.to_vec();
    second.objective.resize(lp.num_variables(), 0.0);
    let mut sol = solve_lp(&second, opts)?;
    if sol.status != LpStatus::Optimal {
        return Ok(first);
    }
    sol.objective = lp.objective_value(&sol.x);
    sol.duals.pop();
    sol.max_violation = validate(lp, &sol.x);
    Ok(sol)
}
