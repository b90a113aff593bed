//! Rewriting a dual decomposition with bounded parts.

use cot_lab_core::martingale::apply_t;
use cot_lab_core::mot::{anchor_at_barycenter, MotDecomposition};
use cot_lab_core::transport::{OtDecomposition, PayoffTable};
use cot_lab_core::{normalize_mot_decomposition, normalize_ot_decomposition, DiscreteMeasure, SupportGrid, TradingStrategy};
use serde::{Deserialize, Serialize};

use super::{Context, Mode};
use crate::error::CliError;
use crate::problem::{Kind, Problem};
use crate::report::{Check, Csv, Report};

pub struct Normalize;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Diagnostics {
    Ot {
        decomposition: OtDecomposition,
        bounds: Vec<Check>,
    },
    Mot {
        anchor: usize,
        /// Translation applied to the grid before normalizing.
        origin: Vec<f64>,
        /// Whether the origin was appended to `X` with zero mass.
        inserted: bool,
        decomposition: MotDecomposition,
        bounds: Vec<Check>,
    },
}

fn vector(v: &Option<Vec<f64>>, name: &str, len: usize) -> Result<Vec<f64>, CliError> {
    match v {
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(CliError::Parse(format!("{name} has {} entries, expected {len}", v.len()))),
        None => Err(CliError::Parse(format!("mode normalize needs parameters.{name}"))),
    }
}

struct OtInput {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    b0: Vec<f64>,
    c0: Vec<f64>,
    n0: PayoffTable,
    radius: f64,
}

fn ot_input(problem: &Problem) -> Result<OtInput, CliError> {
    let (mu, nu) = (problem.mu()?, problem.nu()?);
    let p = &problem.parameters;
    let b0 = vector(&p.b0, "b0", mu.len())?;
    let c0 = vector(&p.c0, "c0", nu.len())?;
    let n0 = match &p.n0 {
        Some(rows) => {
            if rows.len() != mu.len() || rows.iter().any(|r| r.len() != nu.len()) {
                return Err(CliError::Parse(format!(
                    "n0 must be {} rows of {} values",
                    mu.len(),
                    nu.len()
                )));
            }
            PayoffTable::new(mu.len(), nu.len(), rows.concat())?
        }
        None => PayoffTable::zeros(mu.len(), nu.len()),
    };
    let radius = match p.radius {
        Some(r) => r,
        None => PayoffTable::direct_sum(&b0, &c0).add(&n0).sup_norm(),
    };
    Ok(OtInput { mu, nu, b0, c0, n0, radius })
}

struct MotInput {
    grid: SupportGrid,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    b0: Vec<f64>,
    c0: Vec<f64>,
    gamma0: TradingStrategy,
    anchor: usize,
    origin: Vec<f64>,
    inserted: bool,
}

/// Without an explicit anchor the grid is moved to the common barycenter;
/// an appended origin carries `b0 = 0` and `γ0 = 0`.
fn mot_input(problem: &Problem) -> Result<MotInput, CliError> {
    let grid = problem.grid()?;
    let (mu, nu) = (problem.mu()?, problem.nu()?);
    let p = &problem.parameters;
    let mut b0 = vector(&p.b0, "b0", grid.m())?;
    let c0 = vector(&p.c0, "c0", grid.n())?;
    let mut gamma = match &p.gamma0 {
        Some(g) if g.len() == grid.m() && g.iter().all(|v| v.len() == grid.dim()) => g.clone(),
        Some(_) => return Err(CliError::Parse("gamma0 must hold one d-vector per X point".into())),
        None => vec![vec![0.0; grid.dim()]; grid.m()],
    };
    if let Some(anchor) = p.anchor {
        return Ok(MotInput {
            origin: vec![0.0; grid.dim()],
            gamma0: TradingStrategy::new(gamma)?,
            grid,
            mu,
            nu,
            b0,
            c0,
            anchor,
            inserted: false,
        });
    }
    let a = anchor_at_barycenter(&grid, &mu, &nu)?;
    if a.inserted {
        b0.push(0.0);
        gamma.push(vec![0.0; grid.dim()]);
    }
    Ok(MotInput {
        grid: a.grid,
        mu: a.mu,
        nu: a.nu,
        b0,
        c0,
        gamma0: TradingStrategy::new(gamma)?,
        anchor: a.anchor,
        origin: a.origin,
        inserted: a.inserted,
    })
}

impl Mode for Normalize {
    fn name(&self) -> &'static str {
        "normalize"
    }

    fn run(&self, problem: &Problem, _ctx: &Context) -> Result<Report, CliError> {
        let d = match problem.kind() {
            Kind::Ot => {
                let i = ot_input(problem)?;
                let d = normalize_ot_decomposition(&i.mu, &i.nu, &i.b0, &i.c0, &i.n0, i.radius)?;
                let r = d.radius;
                let bounds = vec![
                    Check::at_most("b_sup", d.b_sup, 3.0 * r + 1e-9 * r),
                    Check::at_most("c_sup", d.c_sup, 3.0 * r + 1e-9 * r),
                    Check::at_most("n_below", -d.n_min, 7.0 * r + 1e-9 * r),
                    Check::at_most("n_nonpositive", d.n_max, 0.0),
                ];
                Diagnostics::Ot {
                    decomposition: d,
                    bounds,
                }
            }
            Kind::Mot => {
                let i = mot_input(problem)?;
                let d = normalize_mot_decomposition(&i.grid, &i.mu, &i.nu, &i.b0, &i.c0, &i.gamma0, i.anchor)?;
                let bounds = vec![
                    Check::at_most("b_norm", d.b_norm, 4.0 * d.payoff_norm + 1e-9),
                    Check::at_most("c_norm", d.c_norm, 2.0 * d.payoff_norm + 1e-9),
                ];
                Diagnostics::Mot {
                    anchor: i.anchor,
                    origin: i.origin,
                    inserted: i.inserted,
                    decomposition: d,
                    bounds,
                }
            }
        };
        Ok(Report::ok(self.name(), serde_json::to_value(d)?))
    }

    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError> {
        let d: Diagnostics = report.diagnostics()?;
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        match (d, problem.kind()) {
            (Diagnostics::Ot { decomposition: d, .. }, Kind::Ot) => {
                let i = ot_input(problem)?;
                let z0 = PayoffTable::direct_sum(&i.b0, &i.c0).add(&i.n0);
                if d.b.len() != i.b0.len() || d.c.len() != i.c0.len() || d.n.rows() != i.b0.len() || d.n.cols() != i.c0.len() {
                    return Err(CliError::Parse("decomposition does not match the problem".into()));
                }
                let n = &d.n;
                let rebuilt = PayoffTable::direct_sum(&d.b, &d.c).add(n);
                let scale = 1.0 + z0.sup_norm();
                let n_max = n.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let n_min = n.values().iter().copied().fold(f64::INFINITY, f64::min);
                let mut checks = vec![
                    Check::at_most("reconstruction", rebuilt.sub(&z0).sup_norm(), 1e-12 * scale),
                    Check::at_most("centering", i.mu.integrate(&d.b).abs().max(i.nu.integrate(&d.c).abs()), 1e-12 * scale),
                    Check::holds("radius_echo", d.radius == i.radius),
                    Check::holds("norms_echo", d.b_sup == sup(&d.b) && d.c_sup == sup(&d.c)),
                ];
                // the bounds are only promised for centered b0, c0
                let centered = i.mu.integrate(&i.b0).abs().max(i.nu.integrate(&i.c0).abs()) <= ctx.tolerance * scale;
                if centered {
                    let r = i.radius;
                    checks.push(Check::at_most("n_nonpositive", n_max, 0.0));
                    checks.push(Check::at_most("b_bound", d.b_sup, 3.0 * r + 1e-9 * r));
                    checks.push(Check::at_most("c_bound", d.c_sup, 3.0 * r + 1e-9 * r));
                    checks.push(Check::at_most("n_bound", -n_min, 7.0 * r + 1e-9 * r));
                }
                Ok(checks)
            }
            (Diagnostics::Mot { decomposition: d, anchor, .. }, Kind::Mot) => {
                let i = mot_input(problem)?;
                let a = PayoffTable::direct_sum(&i.b0, &i.c0).add(&apply_t(&i.grid, &i.gamma0)?);
                if d.triple.b.len() != i.grid.m() || d.triple.c.len() != i.grid.n() {
                    return Err(CliError::Parse("decomposition does not match the problem".into()));
                }
                let rebuilt = d.triple.table(&i.grid)?;
                let scale = 1.0 + a.sup_norm();
                let centering = i.mu.integrate(&d.triple.b).abs().max(i.nu.integrate(&d.triple.c).abs());
                Ok(vec![
                    Check::holds("anchor_echo", anchor == i.anchor),
                    Check::at_most("reconstruction", rebuilt.sub(&a).sup_norm(), 1e-12 * scale),
                    Check::at_most("centering", centering, 1e-12 * scale),
                    Check::at_most("anchor_position", sup(&d.triple.gamma.gamma[i.anchor]), 0.0),
                    Check::holds(
                        "norms_echo",
                        d.b_norm == d.triple.b_norm(&i.grid) && d.c_norm == d.triple.c_norm(&i.grid),
                    ),
                ])
            }
            _ => Err(CliError::Parse("report kind does not match the problem".into())),
        }
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let d: Diagnostics = report.diagnostics()?;
        let (b, c) = match &d {
            Diagnostics::Ot { decomposition, .. } => (&decomposition.b, &decomposition.c),
            Diagnostics::Mot { decomposition, .. } => (&decomposition.triple.b, &decomposition.triple.c),
        };
        let field = |part: &str, k: usize, v: String| vec![part.to_string(), k.to_string(), v];
        let mut rows: Vec<Vec<String>> = b.iter().enumerate().map(|(i, v)| field("b", i, v.to_string())).collect();
        rows.extend(c.iter().enumerate().map(|(j, v)| field("c", j, v.to_string())));
        if let Diagnostics::Mot { decomposition, .. } = &d {
            for (i, g) in decomposition.triple.gamma.gamma.iter().enumerate() {
                let parts: Vec<String> = g.iter().map(|v| v.to_string()).collect();
                rows.push(field("gamma", i, parts.join(" ")));
            }
        }
        Ok(Csv {
            header: &["part", "index", "value"],
            rows,
        })
    }
}
