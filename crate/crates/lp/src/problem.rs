//! Natural-form linear programs.
//!
//! Callers describe rows with their own relation and right-hand side and give
//! every variable an interval `[lower, upper]` (either end may be infinite).
//! Conversion to the standard equality form used by the simplex is internal.

use serde::{Deserialize, Serialize};

use crate::error::LpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// `+1` for minimization, `-1` for maximization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const NONNEGATIVE: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };
    pub const FREE: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Bounds { lower, upper }
    }

    pub fn is_free(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::NONNEGATIVE
    }
}

/// One constraint `Σ coeffs · x  (relation)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub bounds: Vec<Bounds>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    /// A program over `num_vars` nonnegative variables with zero objective.
    pub fn new(sense: Sense, num_vars: usize) -> Self {
        LinearProgram {
            sense,
            objective: vec![0.0; num_vars],
            bounds: vec![Bounds::NONNEGATIVE; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, bounds: Bounds) -> usize {
        self.objective.push(cost);
        self.bounds.push(bounds);
        self.objective.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, bounds: Bounds) {
        self.bounds[var] = bounds;
    }

    /// Appends a row and returns its index. Zero coefficients are dropped and
    /// repeated indices are merged.
    pub fn add_row<I>(&mut self, coeffs: I, relation: Relation, rhs: f64) -> usize
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut merged: Vec<(usize, f64)> = coeffs.into_iter().collect();
        merged.sort_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(merged.len());
        for (j, a) in merged {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            coeffs: out,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    /// Objective value `cᵀx`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks finiteness, index ranges and bound ordering.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(LpError::Malformed(format!("objective coefficient {j} is {c}")));
            }
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lower.is_nan() || b.upper.is_nan() || b.lower > b.upper {
                return Err(LpError::Malformed(format!(
                    "variable {j} has bounds [{}, {}]",
                    b.lower, b.upper
                )));
            }
            if b.lower == f64::INFINITY || b.upper == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {j} has an empty domain")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} rhs is {}", row.rhs)));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!(
                        "row {i} references variable {j} of {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} coefficient on {j} is {a}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    None,
    /// Row multipliers `y` with `max_{x in bounds} yᵀAx < yᵀb` and signs
    /// compatible with the row relations (`y ≥ 0` on `≥` rows, `y ≤ 0` on `≤`
    /// rows), proving the rows cannot hold together.
    Farkas(Vec<f64>),
    /// A recession direction of the feasible set along which the objective
    /// improves without bound.
    Ray(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// Worst row or bound violation, each scaled by `1 + |rhs|`.
    pub primal: f64,
    /// Worst sign violation of row multipliers and reduced costs.
    pub dual: f64,
    /// Worst `|multiplier × slack|`, scaled by `1 + |objective|`.
    pub complementarity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: Status,
    /// Primal point (meaningful when optimal).
    pub x: Vec<f64>,
    /// One multiplier per row, in the program's own sense: the reduced costs
    /// `c − Aᵀy` are nonnegative at lower bounds for minimization and
    /// nonpositive at lower bounds for maximization.
    pub y: Vec<f64>,
    pub objective: f64,
    /// `yᵀb` plus the bound terms picked out by the reduced costs.
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub certificate: Certificate,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
