//! Distance from a payoff to the centered static hedges.

use cot_lab_core::quotient_distance;
use cot_lab_core::transport::{PayoffTable, QuotientDistance};

use super::{scaled, Context, Mode};
use crate::error::CliError;
use crate::problem::Problem;
use crate::report::{Check, Csv, Report};

pub struct Quotient;

/// Both sides must agree to this, relative to the payoff norm.
const AGREEMENT: f64 = 1e-7;

impl Mode for Quotient {
    fn name(&self) -> &'static str {
        "quotient"
    }

    fn run(&self, problem: &Problem, _ctx: &Context) -> Result<Report, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let a = problem.payoff(&grid)?;
        let q = quotient_distance(&grid, &mu, &nu, &a)?;
        Ok(Report::ok(self.name(), serde_json::to_value(q)?))
    }

    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let a = problem.payoff(&grid)?;
        let q: QuotientDistance = report.diagnostics()?;
        let (m, n) = (grid.m(), grid.n());
        if q.measure.len() != m * n || q.h.len() != m || q.g.len() != n {
            return Err(CliError::Parse("quotient witnesses do not match the grid".into()));
        }
        let s = a.sup_norm();
        let tol = scaled(ctx.tolerance, s);
        let eta = &q.measure;
        let total: f64 = eta.iter().sum();
        let mass: f64 = eta.iter().map(|v| v.abs()).sum();
        let mut annihilation = 0.0f64;
        for i in 0..m {
            let row: f64 = (0..n).map(|j| eta[i * n + j]).sum();
            annihilation = annihilation.max((row - total * mu.weights()[i]).abs());
        }
        for j in 0..n {
            let col: f64 = (0..m).map(|i| eta[i * n + j]).sum();
            annihilation = annihilation.max((col - total * nu.weights()[j]).abs());
        }
        let pairing: f64 = eta.iter().zip(a.values()).map(|(e, v)| e * v).sum();
        let residual = a.sub(&PayoffTable::direct_sum(&q.h, &q.g)).sup_norm();
        let centering = mu.integrate(&q.h).abs().max(nu.integrate(&q.g).abs());
        Ok(vec![
            Check::at_most("total_variation", (mass - 1.0).abs(), ctx.tolerance),
            Check::at_most("annihilation", annihilation, ctx.tolerance),
            Check::at_most("sup_side", (pairing - q.sup_side).abs(), tol),
            Check::at_most("inf_side", (residual - q.inf_side).abs(), tol),
            Check::at_most("centering", centering, tol),
            Check::at_most("agreement", q.discrepancy(), AGREEMENT * (1.0 + s)),
        ])
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let q: QuotientDistance = report.diagnostics()?;
        let n = q.g.len().max(1);
        Ok(Csv {
            header: &["i", "j", "measure"],
            rows: q
                .measure
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| vec![(k / n).to_string(), (k % n).to_string(), v.to_string()])
                .collect(),
        })
    }
}
