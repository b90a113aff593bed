//! Cells no admissible coupling can charge.

use cot_lab_core::mot::touching_witness;
use cot_lab_core::transport::{PolarCertificate, LARGE_SCAN, POLAR_TOL};
use cot_lab_core::{polar_scan_mot, polar_scan_ot, potential, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Mode};
use crate::error::CliError;
use crate::problem::{Kind, Problem};
use crate::report::{Check, Csv, Report};

pub struct Polar;

#[derive(Debug, Serialize, Deserialize)]
struct Diagnostics {
    kind: Kind,
    /// The scanned cells when only a sample was scanned.
    subset: Option<Vec<(usize, usize)>>,
    certificate: PolarCertificate,
}

impl Mode for Polar {
    fn name(&self) -> &'static str {
        "polar"
    }

    fn run(&self, problem: &Problem, ctx: &Context) -> Result<Report, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let subset = problem.parameters.sample.map(|k| {
            let all: Vec<(usize, usize)> = (0..grid.m())
                .flat_map(|i| (0..grid.n()).map(move |j| (i, j)))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let mut pick: Vec<(usize, usize)> = all.choose_multiple(&mut rng, k).copied().collect();
            pick.sort_unstable();
            pick
        });
        let scanned = subset.as_ref().map_or(grid.cells(), Vec::len);
        if scanned > LARGE_SCAN {
            ctx.warn(&format!(
                "scanning {scanned} cells, one linear program each; set parameters.sample to scan fewer"
            ));
        }
        let certificate = match problem.kind() {
            Kind::Ot => polar_scan_ot(&grid, &mu, &nu, subset.as_deref())?,
            Kind::Mot => polar_scan_mot(&grid, &mu, &nu, subset.as_deref())?,
        };
        let d = Diagnostics {
            kind: problem.kind(),
            subset,
            certificate,
        };
        Ok(Report::ok(self.name(), serde_json::to_value(d)?))
    }

    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError> {
        let grid = problem.grid()?;
        let (mu, nu) = (problem.mu()?, problem.nu()?);
        let d: Diagnostics = report.diagnostics()?;
        let cert = &d.certificate;
        let expected_scan = d.subset.as_ref().map_or(grid.cells(), Vec::len);
        let in_scan = |i: usize, j: usize| {
            i < grid.m() && j < grid.n() && d.subset.as_ref().is_none_or(|s| s.contains(&(i, j)))
        };
        let worst = cert.cells.iter().fold(0.0f64, |a, c| a.max(c.max_mass));
        let mut checks = vec![
            Check::holds("kind_echo", d.kind == problem.kind()),
            Check::holds("scanned_count", cert.scanned == expected_scan),
            Check::holds("cells_in_scan", cert.cells.iter().all(|c| in_scan(c.i, c.j))),
            Check::at_most("polar_mass", worst, POLAR_TOL),
        ];
        if let Some(k) = &cert.kellerer {
            let a: Vec<usize> = (0..grid.m()).filter(|&i| mu.weights()[i] == 0.0).collect();
            let b: Vec<usize> = (0..grid.n()).filter(|&j| nu.weights()[j] == 0.0).collect();
            let covered = cert.cells.iter().all(|c| a.contains(&c.i) || b.contains(&c.j));
            checks.push(Check::holds("zero_atoms", k.a == a && k.b == b));
            checks.push(Check::holds("cover_flag", k.covered == covered));
        }
        let xs = grid.coords(Axis::X);
        let ys = grid.coords(Axis::Y);
        for t in &cert.touching {
            let diam = xs.iter().chain(&ys).fold(0.0f64, |a, v| a.max(v.abs())) * 2.0;
            let touch = (potential(&grid, &mu, t.x0)? - potential(&grid, &nu, t.x0)?).abs();
            let mut rect = Vec::new();
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    if (x < t.x0 && y > t.x0) || (x > t.x0 && y < t.x0) {
                        rect.push((i, j));
                    }
                }
            }
            let witness = touching_witness(&grid, t.x0);
            let witness_err = witness
                .values()
                .iter()
                .zip(t.witness.values())
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            let wmin = witness.values().iter().copied().fold(f64::INFINITY, f64::min);
            checks.push(Check::at_most("touching", touch, ctx.tolerance * (1.0 + diam)));
            checks.push(Check::holds("rectangle", rect == t.rectangle));
            checks.push(Check::at_most("rectangle_mass", t.rectangle_max_mass, POLAR_TOL));
            checks.push(Check::at_most("witness_table", witness_err, 1e-12));
            checks.push(Check::at_most("witness_nonnegative", -wmin, 1e-12));
            checks.push(Check::at_most("witness_value", t.witness_value, 1e-9));
        }
        Ok(checks)
    }

    fn csv(&self, report: &Report) -> Result<Csv, CliError> {
        let d: Diagnostics = report.diagnostics()?;
        Ok(Csv {
            header: &["i", "j", "max_mass"],
            rows: d
                .certificate
                .cells
                .iter()
                .map(|c| vec![c.i.to_string(), c.j.to_string(), c.max_mass.to_string()])
                .collect(),
        })
    }
}
