//! Residual and certificate checks computed directly from the natural-form
//! program, without touching any solver state.

use serde::{Deserialize, Serialize};

use crate::problem::{Certificate, LinearProgram, LpSolution, Relation, Residuals, Status};

/// Reduced costs below this magnitude are treated as zero when deciding which
/// bound a variable is priced against.
const PRICE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Residuals,
    pub objective: f64,
    pub dual_objective: f64,
    pub reduced_costs: Vec<f64>,
    /// `yᵀb − max_{x in bounds} yᵀAx` for a Farkas certificate; positive when
    /// the certificate proves infeasibility.
    pub farkas_margin: Option<f64>,
    /// Worst violation of the recession conditions for an unbounded ray, and
    /// the objective improvement along it (positive means improving).
    pub ray: Option<RayCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayCheck {
    pub violation: f64,
    pub improvement: f64,
}

impl ResidualReport {
    /// Whether the stored status is backed by its witness at tolerance `tol`.
    pub fn certifies(&self, status: Status, tol: f64) -> bool {
        match status {
            Status::Optimal => self.residuals.max() <= tol,
            Status::Infeasible => self.farkas_margin.is_some_and(|m| m > tol),
            Status::Unbounded => self
                .ray
                .is_some_and(|r| r.violation <= tol && r.improvement > tol),
        }
    }
}

/// Recomputes every residual of `sol` against `lp`.
pub fn verify(lp: &LinearProgram, sol: &LpSolution) -> ResidualReport {
    let (residuals, dual_objective, reduced_costs) = if sol.x.len() == lp.num_vars()
        && sol.y.len() == lp.num_rows()
    {
        optimality_residuals(lp, &sol.x, &sol.y)
    } else {
        (
            Residuals {
                primal: f64::INFINITY,
                dual: f64::INFINITY,
                complementarity: f64::INFINITY,
            },
            f64::NAN,
            Vec::new(),
        )
    };
    let objective = if sol.x.len() == lp.num_vars() {
        lp.objective_value(&sol.x)
    } else {
        f64::NAN
    };
    let farkas_margin = match &sol.certificate {
        Certificate::Farkas(y) => Some(farkas_margin(lp, y)),
        _ => None,
    };
    let ray = match &sol.certificate {
        Certificate::Ray(d) => Some(check_ray(lp, d)),
        _ => None,
    };
    ResidualReport {
        residuals,
        objective,
        dual_objective,
        reduced_costs,
        farkas_margin,
        ray,
    }
}

/// Primal, dual and complementarity residuals of the pair `(x, y)`, together
/// with the dual objective and reduced costs `c − Aᵀy`.
pub fn optimality_residuals(lp: &LinearProgram, x: &[f64], y: &[f64]) -> (Residuals, f64, Vec<f64>) {
    let s = lp.sense.sign();
    let objective = lp.objective_value(x);

    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut compl = 0.0f64;
    let mut dual_objective = 0.0;

    let mut reduced = lp.objective.clone();
    for (row, &yi) in lp.rows.iter().zip(y) {
        let act = row.activity(x);
        let scale = 1.0 + row.rhs.abs();
        let viol = match row.relation {
            Relation::Le => (act - row.rhs).max(0.0),
            Relation::Ge => (row.rhs - act).max(0.0),
            Relation::Eq => (act - row.rhs).abs(),
        };
        primal = primal.max(viol / scale);
        let sign_viol = match row.relation {
            Relation::Le => (s * yi).max(0.0),
            Relation::Ge => (-s * yi).max(0.0),
            Relation::Eq => 0.0,
        };
        dual = dual.max(sign_viol);
        if row.relation != Relation::Eq {
            compl = compl.max((yi * (act - row.rhs)).abs());
        }
        dual_objective += yi * row.rhs;
        for &(j, a) in &row.coeffs {
            reduced[j] -= a * yi;
        }
    }

    for (j, (&r, b)) in reduced.iter().zip(&lp.bounds).enumerate() {
        let xj = x[j];
        let lo_viol = if b.lower.is_finite() { (b.lower - xj).max(0.0) } else { 0.0 };
        let hi_viol = if b.upper.is_finite() { (xj - b.upper).max(0.0) } else { 0.0 };
        primal = primal.max(lo_viol / (1.0 + b.lower.abs().min(f64::MAX)));
        primal = primal.max(hi_viol / (1.0 + b.upper.abs().min(f64::MAX)));

        let priced = s * r;
        let scale = 1.0 + lp.objective[j].abs();
        if priced > PRICE_EPS {
            // priced against the lower bound
            if b.lower.is_finite() {
                dual_objective += r * b.lower;
                compl = compl.max((r * (xj - b.lower)).abs());
            } else {
                dual = dual.max(priced / scale);
            }
        } else if priced < -PRICE_EPS {
            if b.upper.is_finite() {
                dual_objective += r * b.upper;
                compl = compl.max((r * (b.upper - xj)).abs());
            } else {
                dual = dual.max(-priced / scale);
            }
        }
    }

    let residuals = Residuals {
        primal,
        dual,
        complementarity: compl / (1.0 + objective.abs()),
    };
    (residuals, dual_objective, reduced)
}

/// `yᵀb − max_{x in bounds} (yᵀA)x`, or `-inf` when the multipliers have the
/// wrong sign for some row or the maximum is unbounded.
pub fn farkas_margin(lp: &LinearProgram, y: &[f64]) -> f64 {
    if y.len() != lp.num_rows() {
        return f64::NEG_INFINITY;
    }
    let mut z = vec![0.0; lp.num_vars()];
    let mut yb = 0.0;
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for (row, &yi) in lp.rows.iter().zip(y) {
        let ok = match row.relation {
            Relation::Le => yi <= 1e-12 * scale,
            Relation::Ge => yi >= -1e-12 * scale,
            Relation::Eq => true,
        };
        if !ok {
            return f64::NEG_INFINITY;
        }
        yb += yi * row.rhs;
        for &(j, a) in &row.coeffs {
            z[j] += a * yi;
        }
    }
    let mut best = 0.0;
    for (zj, b) in z.iter().zip(&lp.bounds) {
        let zj = if zj.abs() <= 1e-9 * scale { 0.0 } else { *zj };
        if zj > 0.0 {
            if !b.upper.is_finite() {
                return f64::NEG_INFINITY;
            }
            best += zj * b.upper;
        } else if zj < 0.0 {
            if !b.lower.is_finite() {
                return f64::NEG_INFINITY;
            }
            best += zj * b.lower;
        }
    }
    yb - best
}

/// Checks that `d` is a recession direction of the feasible set and reports
/// the objective improvement along it.
pub fn check_ray(lp: &LinearProgram, d: &[f64]) -> RayCheck {
    if d.len() != lp.num_vars() {
        return RayCheck {
            violation: f64::INFINITY,
            improvement: f64::NEG_INFINITY,
        };
    }
    let mut violation = 0.0f64;
    for row in &lp.rows {
        let act = row.activity(d);
        let v = match row.relation {
            Relation::Le => act.max(0.0),
            Relation::Ge => (-act).max(0.0),
            Relation::Eq => act.abs(),
        };
        violation = violation.max(v);
    }
    for (dj, b) in d.iter().zip(&lp.bounds) {
        if b.lower.is_finite() {
            violation = violation.max((-dj).max(0.0));
        }
        if b.upper.is_finite() {
            violation = violation.max(dj.max(0.0));
        }
    }
    let improvement = -lp.sense.sign() * lp.objective_value(d);
    RayCheck {
        violation,
        improvement,
    }
}
