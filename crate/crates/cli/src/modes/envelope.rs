//! Convexity and convex envelope of a function on the `X` points.

use cot_lab_core::envelope::{
    convex_envelope, envelope_as_supremum_check, envelope_values, is_convex_bidual, lower_hull_values,
    ConvexityCheck, GridFunction,
};
use serde::{Deserialize, Serialize};

use super::{scaled, Context, Mode};
use crate::error::CliError;
use crate::problem::Problem;
use crate::report::{Check, Csv, Report};

pub struct Envelope;

#[derive(Debug, Serialize, Deserialize)]
struct Diagnostics {
    points: Vec<Vec<f64>>,
    function: Vec<f64>,
    /// `b^c(δ_x)` per point.
    envelope: Vec<f64>,
    convexity: ConvexityCheck,
    /// Envelope is convex, below `φ` and equal to the lower hull (1D only).
    supremum_check: Option<bool>,
    /// `b^c(α)` for the signed measure given as `mu`.
    measure_value: Option<f64>,
    envelope_norm: f64,
    function_norm: f64,
}

fn function(problem: &Problem) -> Result<GridFunction, CliError> {
    let grid = problem.grid()?;
    let values = problem
        .function
        .clone()
        .ok_or_else(|| CliError::Parse("mode envelope needs `function`".into()))?;
    if values.len() != grid.m() {
        return Err(CliError::Parse(format!(
            "function has {} values for {} points",
            values.len(),
            grid.m()
        )));
    }
    Ok(GridFunction::new(grid.x().to_vec(), values)?)
}

impl Mode for Envelope {
    fn name(&self) -> &'static str {
        "envelope"
    }

    fn run(&self, problem: &Problem, _ctx: &Context) -> Result<Report, CliError> {
        let phi = function(problem)?;
        let envelope = envelope_values(&phi)?;
        let convexity = is_convex_bidual(&phi)?;
        let supremum_check = if phi.dim() == 1 {
            Some(envelope_as_supremum_check(&phi)?.holds())
        } else {
            None
        };
        let measure_value = match &problem.mu {
            Some(alpha) => Some(convex_envelope(&phi, phi.points(), alpha)?),
            None => None,
        };
        let env_fn = GridFunction::new(phi.points().to_vec(), envelope.clone())?;
        let d = Diagnostics {
            points: phi.points().to_vec(),
            function: phi.values().to_vec(),
            envelope,
            convexity,
            supremum_check,
            measure_value,
            envelope_norm: env_fn.ell_norm(),
            function_norm: phi.ell_norm(),
        };
        Ok(Report::ok(self.name(), serde_json::to_value(d)?))
    }

    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError> {
        let phi = function(problem)?;
        let d: Diagnostics = report.diagnostics()?;
        if d.envelope.len() != phi.values().len() {
            return Err(CliError::Parse("envelope length does not match the function".into()));
        }
        let s = phi.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let above = d
            .envelope
            .iter()
            .zip(phi.values())
            .fold(0.0f64, |a, (e, v)| a.max(e - v - 1e-12 * (1.0 + v.abs())));
        let mut checks = vec![
            Check::at_most("dominance", above, 0.0),
            Check::holds("function_echo", d.function == phi.values()),
        ];
        if phi.dim() == 1 {
            let xs: Vec<f64> = phi.points().iter().map(|p| p[0]).collect();
            let hull = lower_hull_values(&xs, phi.values());
            let err = d
                .envelope
                .iter()
                .zip(&hull)
                .fold(0.0f64, |a, (e, h)| a.max((e - h).abs()));
            checks.push(Check::at_most("hull_oracle", err, scaled(ctx.tolerance, s)));
            let convex = hull
                .iter()
                .zip(phi.values())
                .all(|(h, v)| (h - v).abs() <= scaled(ctx.tolerance, s));
            checks.push(Check::holds("convexity_flag", convex == d.convexity.convex));
        }
        Ok(checks)
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let d: Diagnostics = report.diagnostics()?;
        let rows = d
            .points
            .iter()
            .zip(d.function.iter().zip(&d.envelope))
            .map(|(p, (f, e))| {
                let x: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                vec![x.join(" "), f.to_string(), e.to_string()]
            })
            .collect();
        Ok(Csv {
            header: &["x", "phi", "envelope"],
            rows,
        })
    }
}
