//! Convex order of the two marginals.

use cot_lab_core::measures::BARYCENTER_TOL;
use cot_lab_core::{check_convex_order_lp, check_convex_order_potential, potential, Axis, CotError, SupportGrid};
use cot_lab_lp::{farkas_margin, LinearProgram, Relation, Sense};
use serde_json::{json, Value};

use super::{Context, Mode};
use crate::error::{CliError, ErrorInfo};
use crate::problem::Problem;
use crate::report::{Check, Csv, Report};

pub struct Order;

/// Atoms of both marginals, sorted, with both potentials.
fn potential_table(problem: &Problem, grid: &SupportGrid) -> Result<Vec<[f64; 3]>, CliError> {
    let (mu, nu) = (problem.mu()?, problem.nu()?);
    let mut ts: Vec<f64> = grid.coords(Axis::X).into_iter().chain(grid.coords(Axis::Y)).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.into_iter()
        .map(|t| Ok([t, potential(grid, &mu, t)?, potential(grid, &nu, t)?]))
        .collect()
}

impl Mode for Order {
    fn name(&self) -> &'static str {
        "order"
    }

    fn run(&self, problem: &Problem, _ctx: &Context) -> Result<Report, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let lp = check_convex_order_lp(&grid, &mu, &nu)?;
        let pot = if grid.dim() == 1 {
            Some(check_convex_order_potential(&grid, &mu, &nu)?)
        } else {
            None
        };
        let Some(coupling) = lp.coupling.filter(|_| lp.ordered) else {
            let bx = mu.barycenter(&grid);
            let by = nu.barycenter(&grid);
            let gap = bx.iter().zip(&by).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            return Err(CotError::NotConvexOrder {
                witness: pot.as_ref().and_then(|p| p.violation_point),
                barycenter_gap: pot.as_ref().map_or(gap, |p| p.barycenter_gap),
                farkas: lp.farkas,
            }
            .into());
        };
        let potentials = if grid.dim() == 1 {
            potential_table(problem, &grid)?
        } else {
            Vec::new()
        };
        Ok(Report::ok(
            self.name(),
            json!({
                "ordered": true,
                "potential": pot,
                "methods_agree": pot.as_ref().is_none_or(|p| p.ordered),
                "coupling": coupling.triples(),
                "potentials": potentials,
            }),
        ))
    }

    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let triples: Vec<(usize, usize, f64)> = serde_json::from_value(
            report.diagnostics.get("coupling").cloned().unwrap_or(Value::Null),
        )?;
        let tol = ctx.tolerance;
        let negativity = triples.iter().fold(0.0f64, |a, t| a.max(-t.2));
        let (m, n, d) = (grid.m(), grid.n(), grid.dim());
        let mut rows = vec![0.0; m];
        let mut cols = vec![0.0; n];
        let mut drift = vec![vec![0.0; d]; m];
        for &(i, j, w) in &triples {
            if i >= m || j >= n {
                return Err(CliError::Parse(format!("coupling cell ({i}, {j}) outside the grid")));
            }
            rows[i] += w;
            cols[j] += w;
            for r in 0..d {
                drift[i][r] += w * (grid.y()[j][r] - grid.x()[i][r]);
            }
        }
        let marginal = rows
            .iter()
            .zip(mu.weights())
            .chain(cols.iter().zip(nu.weights()))
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        let defect = drift
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let mut checks = vec![
            Check::at_most("nonnegativity", negativity, 0.0),
            Check::at_most("marginals", marginal, tol),
            Check::at_most("martingale_defect", defect, tol),
        ];
        if d == 1 {
            let worst = potential_table(problem, &grid)?
                .iter()
                .fold(0.0f64, |a, [_, um, un]| a.max(um - un));
            checks.push(Check::at_most("potential_dominance", worst, tol));
        }
        Ok(checks)
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let table: Vec<[f64; 3]> = serde_json::from_value(
            report.diagnostics.get("potentials").cloned().unwrap_or(Value::Array(Vec::new())),
        )?;
        Ok(Csv {
            header: &["t", "u_mu", "u_nu"],
            rows: table.iter().map(|r| r.iter().map(f64::to_string).collect()).collect(),
        })
    }
}

/// Re-checks the certificate attached to a convex-order failure: a point
/// where `u_μ > u_ν`, a barycenter gap, or Farkas multipliers of the
/// martingale-coupling rows.
pub fn verify_not_ordered(problem: &Problem, info: &ErrorInfo, ctx: &Context) -> Result<Vec<Check>, CliError> {
    let grid = problem.grid()?;
    let (mu, nu) = (problem.mu()?, problem.nu()?);
    let tol = ctx.tolerance;
    let mut certified = Vec::new();

    if let Some(t) = info.details.get("witness").and_then(Value::as_f64) {
        let excess = potential(&grid, &mu, t)? - potential(&grid, &nu, t)?;
        certified.push(excess > tol);
    }
    let bx = mu.barycenter(&grid);
    let by = nu.barycenter(&grid);
    certified.push(bx.iter().zip(&by).any(|(a, b)| (a - b).abs() > BARYCENTER_TOL));
    if let Some(y) = info.details.get("farkas").and_then(|v| serde_json::from_value::<Vec<f64>>(v.clone()).ok()) {
        let (m, n, d) = (grid.m(), grid.n(), grid.dim());
        let mut lp = LinearProgram::new(Sense::Maximize, m * n);
        for (i, &w) in mu.weights().iter().enumerate() {
            lp.add_row((0..n).map(|j| (i * n + j, 1.0)), Relation::Eq, w);
        }
        for (j, &w) in nu.weights().iter().enumerate() {
            lp.add_row((0..m).map(|i| (i * n + j, 1.0)), Relation::Eq, w);
        }
        for i in 0..m {
            for r in 0..d {
                let xi = grid.x()[i][r];
                lp.add_row((0..n).map(|j| (i * n + j, grid.y()[j][r] - xi)), Relation::Eq, 0.0);
            }
        }
        certified.push(farkas_margin(&lp, &y) > 0.0);
    }
    Ok(vec![Check::holds(
        "not_ordered_certificate",
        certified.iter().any(|&c| c),
    )])
}
