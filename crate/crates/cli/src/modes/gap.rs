//! Shortfall bounds for shifted-diagonal couplings.

use cot_lab_core::mot::GapSequenceReport;
use cot_lab_core::{gap_sequence, HedgeNorms};

use super::{Context, Mode};
use crate::error::CliError;
use crate::problem::Problem;
use crate::report::{Check, Csv, Report};

pub struct Gap;

pub const DEFAULT_N: usize = 1001;
pub const DEFAULT_NORMS: [f64; 3] = [10.0, 10.0, 10.0];

fn settings(problem: &Problem) -> (usize, Vec<usize>, HedgeNorms) {
    let p = &problem.parameters;
    let [b, c, gamma] = p.hedge_norms.unwrap_or(DEFAULT_NORMS);
    (
        p.n.unwrap_or(DEFAULT_N),
        p.shifts.clone().unwrap_or_else(|| vec![1]),
        HedgeNorms { b, c, gamma },
    )
}

impl Mode for Gap {
    fn name(&self) -> &'static str {
        "gap"
    }

    fn run(&self, problem: &Problem, _ctx: &Context) -> Result<Report, CliError> {
        let (n, shifts, norms) = settings(problem);
        let r = gap_sequence(n, &shifts, norms)?;
        Ok(Report::ok(self.name(), serde_json::to_value(r)?))
    }

    fn verify(&self, problem: &Problem, report: &Report, _ctx: &Context) -> Result<Vec<Check>, CliError> {
        let (n, shifts, norms) = settings(problem);
        let r: GapSequenceReport = report.diagnostics()?;
        let mut checks = vec![
            Check::holds("n_echo", r.n == n && r.norms == norms),
            Check::holds("shifts_echo", r.rows.iter().map(|row| row.shift).eq(shifts.iter().copied())),
        ];
        // closed forms: η_x is uniform on the first n − s points, η_y on the last n − s
        let step = (n - 1) as f64;
        let u = 1.0 / n as f64;
        for row in &r.rows {
            let s = row.shift;
            let w = 1.0 / (n - s) as f64;
            let dist = |lo: usize, hi: usize| -> f64 {
                (0..n)
                    .map(|i| {
                        let weight = if (lo..hi).contains(&i) { (w - u).abs() } else { u };
                        weight * (1.0 + i as f64 / step)
                    })
                    .sum()
            };
            let (dx, dy, defect) = (dist(0, n - s), dist(s, n), s as f64 / step);
            let shortfall = norms.b * dx + norms.c * dy + norms.gamma * defect - 1.0;
            let err = [
                row.dist_x - dx,
                row.dist_y - dy,
                row.defect - defect,
                row.offdiag_mass - 1.0,
                row.shortfall - shortfall,
            ]
            .iter()
            .fold(0.0f64, |a, e| a.max(e.abs()));
            checks.push(Check::at_most(&format!("row_shift_{s}"), err, 1e-12 * (1.0 + shortfall.abs())));
        }
        Ok(checks)
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let r: GapSequenceReport = report.diagnostics()?;
        Ok(Csv {
            header: &["n", "shift", "dist_x", "dist_y", "defect", "offdiag_mass", "shortfall"],
            rows: r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        r.n.to_string(),
                        row.shift.to_string(),
                        row.dist_x.to_string(),
                        row.dist_y.to_string(),
                        row.defect.to_string(),
                        row.offdiag_mass.to_string(),
                        row.shortfall.to_string(),
                    ]
                })
                .collect(),
        })
    }
}
