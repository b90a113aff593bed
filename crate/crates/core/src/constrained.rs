//! Optimal transport with finitely many moment constraints `η(f_k) = 0`.

use cot_lab_lp::{solve, Certificate, Sense, Status};
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::measures::{DiscreteMeasure, SupportGrid};
use crate::program::Program;
use crate::transport::{polar_scan_cells, quasi_sure, require_marginals, solve_pair, DualityReport, PayoffTable};

/// Largest number of moment constraints accepted.
pub const MAX_CONSTRAINTS: usize = 64;
/// A range endpoint must clear zero by this much to count as admissible.
pub const ADMISSIBILITY_TOL: f64 = 1e-9;
/// Slack allowed on `|a_k| ≤ c*_k`.
pub const MULTIPLIER_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDiagnostic {
    /// One-based position of the constraint.
    pub k: usize,
    /// `inf η(f_k)` over couplings satisfying constraints `1..k−1`.
    pub lower: f64,
    /// `sup η(f_k)` over the same set.
    pub upper: f64,
    pub admissible: bool,
    /// Constant `b_k` centering the range, suggested when `0 ∉ (lower, upper)`.
    pub shift: Option<f64>,
    /// Whether subtracting `shift` makes the constraint admissible.
    pub shift_restores: bool,
    /// `max(1/upper, 1/(−lower))` when admissible.
    pub c_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConstraintSet {
    pub tables: Vec<PayoffTable>,
    pub diagnostics: Vec<ConstraintDiagnostic>,
}

impl MomentConstraintSet {
    pub fn admissible(&self) -> bool {
        self.diagnostics.iter().all(|d| d.admissible)
    }

    pub fn first_inadmissible(&self) -> Option<&ConstraintDiagnostic> {
        self.diagnostics.iter().find(|d| !d.admissible)
    }

    pub fn c_stars(&self) -> Vec<Option<f64>> {
        self.diagnostics.iter().map(|d| d.c_star).collect()
    }
}

fn optimize(program: &Program, objective: &[f64], sense: Sense, k: usize) -> Result<f64> {
    let (lp, _) = program.primal(objective, sense);
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.objective),
        Status::Infeasible => Err(CotError::EmptyConstraintSet {
            k,
            farkas: match sol.certificate {
                Certificate::Farkas(y) => y,
                _ => Vec::new(),
            },
        }),
        Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
    }
}

fn check_count(grid: &SupportGrid, fs: &[PayoffTable]) -> Result<()> {
    if fs.len() > MAX_CONSTRAINTS {
        return Err(CotError::Shape(format!(
            "{} constraints exceed the limit of {MAX_CONSTRAINTS}",
            fs.len()
        )));
    }
    for f in fs {
        f.require_on(grid, "constraint")?;
    }
    Ok(())
}

/// Sequential range of each constraint over the couplings satisfying all
/// earlier ones.
pub fn check_structure(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    fs: &[PayoffTable],
) -> Result<MomentConstraintSet> {
    require_marginals(grid, mu, nu)?;
    check_count(grid, fs)?;
    let mut diagnostics = Vec::with_capacity(fs.len());
    for (idx, f) in fs.iter().enumerate() {
        let k = idx + 1;
        let program = Program::new(grid, mu.weights(), nu.weights()).moments(&fs[..idx]);
        let lower = optimize(&program, f.values(), Sense::Minimize, k)?;
        let upper = optimize(&program, f.values(), Sense::Maximize, k)?;
        let admissible = lower < -ADMISSIBILITY_TOL && upper > ADMISSIBILITY_TOL;
        let shift = (!admissible).then_some((lower + upper) / 2.0);
        diagnostics.push(ConstraintDiagnostic {
            k,
            lower,
            upper,
            admissible,
            shift,
            shift_restores: !admissible && upper - lower > 2.0 * ADMISSIBILITY_TOL,
            c_star: admissible.then(|| (1.0 / upper).max(1.0 / -lower)),
        });
    }
    Ok(MomentConstraintSet {
        tables: fs.to_vec(),
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotReport {
    pub report: DualityReport,
    pub structure: MomentConstraintSet,
}

/// `max η(f)` over couplings with `η(f_k) = 0` for all `k`, and the dual
/// `min c` over `c + h ⊕ g + Σ a_k f_k ≥ f`. Among dual optimizers the one
/// with the smallest `Σ |a_k|` is reported. In quasi-sure mode domination
/// is required off the polar cells only.
pub fn solve_cot(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: &PayoffTable,
    fs: &[PayoffTable],
    quasi_sure_mode: bool,
) -> Result<CotReport> {
    f.require_on(grid, "payoff")?;
    let structure = check_structure(grid, mu, nu, fs)?;
    if let Some(d) = structure.first_inadmissible() {
        return Err(CotError::Inadmissible {
            k: d.k,
            lower: d.lower,
            upper: d.upper,
            shift: d.shift.unwrap_or(0.0),
        });
    }
    let program = Program::new(grid, mu.weights(), nu.weights()).moments(fs);
    let report = if quasi_sure_mode {
        let cert = polar_scan_cells(&program, None)?;
        quasi_sure(program, &cert, f, true)?
    } else {
        solve_pair(&program, f, true)?
    };
    Ok(CotReport { report, structure })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierBound {
    /// `c*_k − |a_k|` per constraint.
    pub margins: Vec<f64>,
    pub holds: bool,
}

/// Compares each moment multiplier with `c*_k = max(1/p̄_k, 1/(−p̲_k))`.
/// Meaningful for payoffs with `‖f‖_∞ ≤ 1`.
pub fn multiplier_bound_check(
    report: &DualityReport,
    structure: &MomentConstraintSet,
) -> Result<MultiplierBound> {
    let a = &report.hedge.moments;
    if a.len() != structure.diagnostics.len() {
        return Err(CotError::Shape(format!(
            "{} multipliers for {} constraints",
            a.len(),
            structure.diagnostics.len()
        )));
    }
    let margins: Vec<f64> = a
        .iter()
        .zip(&structure.diagnostics)
        .map(|(ak, d)| d.c_star.unwrap_or(f64::NAN) - ak.abs())
        .collect();
    let holds = margins.iter().all(|&m| m >= -MULTIPLIER_TOL);
    Ok(MultiplierBound { margins, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Axis;
    use crate::transport::solve_ot;

    fn setup() -> (SupportGrid, DiscreteMeasure, DiscreteMeasure, PayoffTable) {
        let g = SupportGrid::line(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let f1 = PayoffTable::from_fn(&g, |x, y| (x[0] - 0.5) * (y[0] - 0.5));
        (
            g,
            DiscreteMeasure::uniform(Axis::X, 2),
            DiscreteMeasure::uniform(Axis::Y, 2),
            f1,
        )
    }

    #[test]
    fn product_moment_is_admissible() {
        let (g, mu, nu, f1) = setup();
        let s = check_structure(&g, &mu, &nu, &[f1]).unwrap();
        let d = &s.diagnostics[0];
        assert!((d.lower + 0.25).abs() < 1e-12 && (d.upper - 0.25).abs() < 1e-12);
        assert!(d.admissible);
        assert!((d.c_star.unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn constant_and_static_constraints() {
        let (g, mu, nu, _) = setup();
        let one = PayoffTable::from_fn(&g, |_, _| 1.0);
        let d = &check_structure(&g, &mu, &nu, &[one]).unwrap().diagnostics[0];
        assert!(!d.admissible);
        assert!((d.shift.unwrap() - 1.0).abs() < 1e-12);
        assert!(!d.shift_restores);

        let hg = PayoffTable::direct_sum(&[1.0, -1.0], &[0.5, -0.5]);
        let d = &check_structure(&g, &mu, &nu, &[hg]).unwrap().diagnostics[0];
        assert!(!d.admissible);
        assert!(d.lower.abs() < 1e-12 && d.upper.abs() < 1e-12);
    }

    #[test]
    fn empty_constraint_set_names_k() {
        let (g, mu, nu, _) = setup();
        let one = PayoffTable::from_fn(&g, |_, _| 1.0);
        let err = check_structure(&g, &mu, &nu, &[one.clone(), one]).unwrap_err();
        assert!(matches!(err, CotError::EmptyConstraintSet { k: 2, .. }));
    }

    #[test]
    fn cot_examples() {
        let (g, mu, nu, f1) = setup();
        let diag = PayoffTable::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let plain = solve_cot(&g, &mu, &nu, &diag, &[], false).unwrap();
        let ot = solve_ot(&g, &mu, &nu, &diag).unwrap();
        assert!((plain.report.primal - ot.primal).abs() < 1e-12);

        let own = solve_cot(&g, &mu, &nu, &f1, std::slice::from_ref(&f1), false).unwrap();
        assert!(own.report.primal.abs() < 1e-12);

        let r = solve_cot(&g, &mu, &nu, &diag, &[f1], false).unwrap();
        assert!(r.report.certified(&diag));
        // η(f1) = 0 forces the product coupling
        assert!((r.report.primal - 0.5).abs() < 1e-9);
        let b = multiplier_bound_check(&r.report, &r.structure).unwrap();
        assert!(b.holds, "{b:?}");
    }

    #[test]
    fn inadmissible_is_rejected() {
        let (g, mu, nu, _) = setup();
        let one = PayoffTable::from_fn(&g, |_, _| 1.0);
        let err = solve_cot(&g, &mu, &nu, &one, std::slice::from_ref(&one), false).unwrap_err();
        assert!(matches!(err, CotError::Inadmissible { k: 1, .. }));
    }

    #[test]
    fn empty_multiplier_check_is_vacuous() {
        let (g, mu, nu, _) = setup();
        let r = solve_cot(&g, &mu, &nu, &PayoffTable::zeros(2, 2), &[], false).unwrap();
        assert!(multiplier_bound_check(&r.report, &r.structure).unwrap().holds);
    }
}
