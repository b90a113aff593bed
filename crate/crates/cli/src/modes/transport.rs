//! Transport duality: plain, moment-constrained and martingale.

use cot_lab_core::constrained::{multiplier_bound_check, solve_cot};
use cot_lab_core::transport::{
    audit, bb_superhedge, solve_ot, Instance, OrderUnit, COMPLEMENTARITY_TOL, GAP_TOL,
};
use cot_lab_core::{solve_mot, Coupling, DualityReport};
use serde_json::{json, Map, Value};

use super::{scaled, Context, Mode};
use crate::error::CliError;
use crate::problem::Problem;
use crate::report::{Check, Csv, Report, Values, Witnesses};

pub enum Transport {
    Ot,
    Cot,
    Mot,
}

impl Transport {
    fn martingale(&self) -> bool {
        matches!(self, Transport::Mot)
    }
}

impl Mode for Transport {
    fn name(&self) -> &'static str {
        match self {
            Transport::Ot => "ot",
            Transport::Cot => "cot",
            Transport::Mot => "mot",
        }
    }

    fn run(&self, problem: &Problem, _ctx: &Context) -> Result<Report, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let f = problem.payoff(&grid)?;
        let quasi_sure = problem.parameters.quasi_sure.unwrap_or(false);
        if !matches!(self, Transport::Cot) && !problem.constraints.is_empty() {
            return Err(CliError::Parse("constraints need mode cot".into()));
        }
        let mut diag = Map::new();
        let r: DualityReport = match self {
            Transport::Ot if quasi_sure => bb_superhedge(&grid, &mu, &nu, &f)?,
            Transport::Ot => solve_ot(&grid, &mu, &nu, &f)?,
            Transport::Cot => {
                let fs = problem.constraints(&grid)?;
                let r = solve_cot(&grid, &mu, &nu, &f, &fs, quasi_sure)?;
                let bound = multiplier_bound_check(&r.report, &r.structure)?;
                diag.insert("structure".into(), serde_json::to_value(&r.structure)?);
                diag.insert(
                    "multiplier_bound".into(),
                    json!({
                        "applies": f.sup_norm() <= 1.0,
                        "margins": bound.margins,
                        "holds": bound.holds,
                    }),
                );
                r.report
            }
            Transport::Mot if quasi_sure => {
                return Err(CliError::Parse("quasi_sure applies to modes ot and cot".into()))
            }
            Transport::Mot => solve_mot(&grid, &mu, &nu, &f)?,
        };
        diag.insert("certified".into(), Value::Bool(r.certified(&f)));
        diag.insert("quasi_sure".into(), Value::Bool(quasi_sure));
        diag.insert("residuals".into(), serde_json::to_value(&r.residuals)?);
        if let Some(s) = &r.scaling {
            diag.insert("scaling".into(), serde_json::to_value(s)?);
        }
        Ok(Report {
            values: Some(Values {
                primal: r.primal,
                dual: r.dual,
                gap: r.gap,
            }),
            witnesses: Some(Witnesses {
                coupling: r.coupling.triples(),
                hedge: Some(r.hedge),
            }),
            ..Report::ok(self.name(), Value::Object(diag))
        })
    }

    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let f = problem.payoff(&grid)?;
        let fs = problem.constraints(&grid)?;
        let values = report
            .values
            .as_ref()
            .ok_or_else(|| CliError::Parse("report has no values".into()))?;
        let w = report
            .witnesses
            .as_ref()
            .ok_or_else(|| CliError::Parse("report has no witnesses".into()))?;
        let hedge = w
            .hedge
            .as_ref()
            .ok_or_else(|| CliError::Parse("report has no hedge".into()))?;

        let negativity = w.coupling.iter().fold(0.0f64, |a, t| a.max(-t.2));
        let clamped: Vec<_> = w.coupling.iter().map(|&(i, j, v)| (i, j, v.max(0.0))).collect();
        let eta = Coupling::from_triples(grid.m(), grid.n(), &clamped)?;
        let inst = Instance {
            grid: &grid,
            mu: mu.weights(),
            nu: nu.weights(),
            payoff: &f,
            moments: &fs,
            martingale: self.martingale(),
            unit: OrderUnit::Constant,
        };
        let r = audit(&inst, &eta, hedge)?;

        let tol = ctx.tolerance;
        let s = f.sup_norm();
        let fs_norm = fs.iter().fold(0.0f64, |a, t| a.max(t.sup_norm()));
        let zeta_min = hedge.zeta.iter().fold(0.0f64, |a, z| a.min(z.2));
        let mut checks = vec![
            Check::at_most("nonnegativity", negativity, 0.0),
            Check::at_most("marginals", r.marginal, tol),
            Check::at_most("domination", r.domination, scaled(tol, s)),
            Check::at_most("complementarity", r.complementarity, scaled(COMPLEMENTARITY_TOL, s)),
            Check::at_most("centering", r.centering, scaled(tol, s)),
            Check::at_most("primal_value", (values.primal - r.primal).abs(), scaled(tol, r.primal.abs())),
            Check::at_most("dual_value", (values.dual - r.dual).abs(), scaled(tol, r.dual.abs())),
            Check::at_most("duality_gap", (r.primal - r.dual).abs(), scaled(GAP_TOL, r.primal.abs())),
            Check::at_most(
                "reported_gap",
                (values.gap - (values.primal - values.dual).abs()).abs(),
                scaled(tol, values.gap),
            ),
            Check::at_most("zeta_nonnegative", -zeta_min, 0.0),
            Check::holds(
                "zeta_only_when_quasi_sure",
                hedge.zeta.is_empty() || problem.parameters.quasi_sure.unwrap_or(false),
            ),
        ];
        if self.martingale() {
            checks.push(Check::at_most("martingale_defect", r.defect, tol));
        }
        if !fs.is_empty() {
            checks.push(Check::at_most("moment_constraints", r.moments, scaled(tol, fs_norm)));
        }
        Ok(checks)
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let rows = report
            .witnesses
            .as_ref()
            .map(|w| {
                w.coupling
                    .iter()
                    .map(|(i, j, v)| vec![i.to_string(), j.to_string(), v.to_string()])
                    .collect()
            })
            .unwrap_or_default();
        Ok(Csv {
            header: &["i", "j", "weight"],
            rows,
        })
    }
}
