//! Martingale optimal transport: duality with dynamic hedges, the `m*`
//! normalization, bounded dual triples, polar rectangles at potential
//! touching points, and the diagonal gap-witness sequence.

use std::collections::BTreeMap;

use cot_lab_lp::{solve, Bounds, LinearProgram, Relation, Sense, Status};
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::martingale::{apply_t, TradingStrategy};
use crate::measures::{
    check_convex_order_lp, check_convex_order_potential, norm, potential_at, Axis,
    DiscreteMeasure, SupportGrid, BARYCENTER_TOL, POTENTIAL_TOL,
};
use crate::program::Program;
use crate::transport::{
    max_cell_masses, require_marginals, scan_cells, solve_pair, DualityReport,
    PayoffTable, PolarCell, PolarCertificate, ScalingCheck, TouchingPoint, POLAR_TOL,
};

/// Relative tolerance of the scaling identity.
pub const SCALING_TOL: f64 = 1e-9;

/// `m* = μ(1 + |x|) + ν(1 + |y|)`, the `ℓ`-mass of every admissible coupling.
pub fn normalization_constant(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    require_marginals(grid, mu, nu)?;
    Ok(mu.weighted_mass(grid) + nu.weighted_mass(grid))
}

/// Fails with a Strassen certificate unless `μ ≤_c ν`.
pub fn require_convex_order(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<()> {
    require_marginals(grid, mu, nu)?;
    let bx = mu.barycenter(grid);
    let by = nu.barycenter(grid);
    let mut barycenter_gap = norm(&bx.iter().zip(&by).map(|(a, b)| b - a).collect::<Vec<_>>());
    let mut witness = None;
    if grid.dim() == 1 {
        let p = check_convex_order_potential(grid, mu, nu)?;
        barycenter_gap = p.barycenter_gap;
        witness = p.violation_point;
    }
    let lp = check_convex_order_lp(grid, mu, nu)?;
    if lp.ordered {
        return Ok(());
    }
    Err(CotError::NotConvexOrder {
        witness,
        barycenter_gap,
        farkas: lp.farkas,
    })
}

/// `max η(f)` over martingale couplings of `μ`, `ν` with the dual
/// `min c` over `c + h ⊕ g + T(γ) ≥ f`, cross-checked against the same
/// problem normalized to `η(ℓ) = 1`.
pub fn solve_mot(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: &PayoffTable,
) -> Result<DualityReport> {
    f.require_on(grid, "payoff")?;
    require_convex_order(grid, mu, nu)?;
    let program = Program::new(grid, mu.weights(), nu.weights()).martingale(true);
    let mut report = solve_pair(&program, f, false)?;
    let m_star = normalization_constant(grid, mu, nu)?;
    let normalized_primal = normalized_value(grid, mu, nu, f)?;
    let scaled = m_star * normalized_primal;
    report.scaling = Some(ScalingCheck {
        m_star,
        normalized_primal,
        relative_error: (report.primal - scaled).abs() / (1.0 + report.primal.abs()),
    });
    Ok(report)
}

/// `max η(f)` over martingale `η ≥ 0` with `η_x = tμ`, `η_y = tν` for some
/// `t ≥ 0` and `η(ℓ) = 1`.
fn normalized_value(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: &PayoffTable,
) -> Result<f64> {
    let (m, n, d) = (grid.m(), grid.n(), grid.dim());
    let t = m * n;
    let mut lp = LinearProgram::new(Sense::Maximize, t + 1);
    lp.set_bounds(t, Bounds::NONNEGATIVE);
    for (c, &v) in f.values().iter().enumerate() {
        lp.set_cost(c, v);
    }
    for i in 0..m {
        lp.add_row(
            (0..n).map(|j| (i * n + j, 1.0)).chain([(t, -mu.weights()[i])]),
            Relation::Eq,
            0.0,
        );
    }
    for j in 0..n {
        lp.add_row(
            (0..m).map(|i| (i * n + j, 1.0)).chain([(t, -nu.weights()[j])]),
            Relation::Eq,
            0.0,
        );
    }
    for i in 0..m {
        for r in 0..d {
            let xi = grid.x()[i][r];
            lp.add_row((0..n).map(|j| (i * n + j, grid.y()[j][r] - xi)), Relation::Eq, 0.0);
        }
    }
    lp.add_row(
        (0..m).flat_map(|i| (0..n).map(move |j| (i * n + j, grid.ell(i, j)))),
        Relation::Eq,
        1.0,
    );
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.objective),
        Status::Infeasible => Err(CotError::UnexpectedStatus("infeasible")),
        Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
    }
}

/// A martingale transport problem translated so the common barycenter is
/// the origin, with the origin present among the `X` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoredProblem {
    pub grid: SupportGrid,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    /// Index of the origin in `X`.
    pub anchor: usize,
    /// The barycenter subtracted from every point.
    pub origin: Vec<f64>,
    /// Whether the anchor was appended as a zero-mass point.
    pub inserted: bool,
}

/// Translates the grid to the common barycenter and makes sure the origin is
/// an `X` point, appending it with zero `μ`-mass if needed.
pub fn anchor_at_barycenter(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<AnchoredProblem> {
    require_marginals(grid, mu, nu)?;
    let origin = mu.barycenter(grid);
    let by = nu.barycenter(grid);
    if origin.iter().zip(&by).any(|(a, b)| (a - b).abs() > BARYCENTER_TOL) {
        return Err(CotError::Precondition(format!(
            "barycenters differ: {origin:?} vs {by:?}"
        )));
    }
    let moved = grid.recentered(&origin);
    let mut x = moved.x().to_vec();
    let mut weights = mu.weights().to_vec();
    let found = x.iter().position(|p| norm(p) <= 1e-12);
    let (anchor, inserted) = match found {
        Some(k) => {
            x[k] = vec![0.0; grid.dim()];
            (k, false)
        }
        None => {
            x.push(vec![0.0; grid.dim()]);
            weights.push(0.0);
            (x.len() - 1, true)
        }
    };
    Ok(AnchoredProblem {
        grid: SupportGrid::new(grid.dim(), x, moved.y().to_vec())?,
        mu: DiscreteMeasure::new(Axis::X, weights)?,
        nu: nu.clone(),
        anchor,
        origin,
        inserted,
    })
}

/// `(b, c, γ)` with `μ(b) = ν(c) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotDualTriple {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub gamma: TradingStrategy,
}

impl MotDualTriple {
    /// `max |b(x)| / (1 + |x|)`.
    pub fn b_norm(&self, grid: &SupportGrid) -> f64 {
        weighted_norm(&self.b, grid, Axis::X)
    }

    /// `max |c(y)| / (1 + |y|)`.
    pub fn c_norm(&self, grid: &SupportGrid) -> f64 {
        weighted_norm(&self.c, grid, Axis::Y)
    }

    /// `b ⊕ c + T(γ)`.
    pub fn table(&self, grid: &SupportGrid) -> Result<PayoffTable> {
        Ok(PayoffTable::direct_sum(&self.b, &self.c).add(&apply_t(grid, &self.gamma)?))
    }
}

fn weighted_norm(v: &[f64], grid: &SupportGrid, axis: Axis) -> f64 {
    v.iter()
        .zip(grid.points(axis))
        .fold(0.0f64, |a, (x, p)| a.max(x.abs() / (1.0 + norm(p))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotDecomposition {
    pub triple: MotDualTriple,
    /// `‖a‖_ℓ` of the input table.
    pub payoff_norm: f64,
    pub b_norm: f64,
    pub c_norm: f64,
    /// Weighted norm of `c` before the final recentering by `ν`.
    pub c_anchor_norm: f64,
    /// Sup-norm distance between the rebuilt and the input table.
    pub reconstruction: f64,
    /// `max(|μ(b)|, |ν(c)|)`.
    pub centering: f64,
}

impl MotDecomposition {
    /// `‖b‖ ≤ 4‖a‖` and `‖c‖ ≤ 2‖a‖`, each with absolute slack `tol`.
    pub fn within_bounds(&self, tol: f64) -> bool {
        self.b_norm <= 4.0 * self.payoff_norm + tol && self.c_norm <= 2.0 * self.payoff_norm + tol
    }
}

/// Rewrites `a = b₀ ⊕ c₀ + T(γ₀)` in three recentering steps: move the
/// anchor position `γ₀(x*)` into linear statics, shift constants so `b`
/// vanishes at the anchor, then center `b` and `c` under `μ` and `ν`.
pub fn normalize_mot_decomposition(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    b0: &[f64],
    c0: &[f64],
    gamma0: &TradingStrategy,
    anchor: usize,
) -> Result<MotDecomposition> {
    require_marginals(grid, mu, nu)?;
    if b0.len() != grid.m() || c0.len() != grid.n() {
        return Err(CotError::Shape("b0 and c0 must match the grid axes".into()));
    }
    if anchor >= grid.m() {
        return Err(CotError::Precondition(format!("anchor {anchor} is not an X point")));
    }
    let p = grid.x()[anchor].clone();
    let bx = mu.barycenter(grid);
    let by = nu.barycenter(grid);
    for r in 0..grid.dim() {
        if (bx[r] - p[r]).abs() > BARYCENTER_TOL || (by[r] - p[r]).abs() > BARYCENTER_TOL {
            return Err(CotError::Precondition(format!(
                "anchor {p:?} is not the common barycenter ({bx:?}, {by:?})"
            )));
        }
    }
    let a = PayoffTable::direct_sum(b0, c0).add(&apply_t(grid, gamma0)?);
    let scale = 1.0 + a.sup_norm();
    if (mu.integrate(b0) + nu.integrate(c0)).abs() > 1e-9 * scale {
        return Err(CotError::Precondition("μ(b0) + ν(c0) must vanish".into()));
    }

    let g0 = gamma0.gamma[anchor].clone();
    let dot = |v: &[f64]| -> f64 { g0.iter().zip(v.iter().zip(&p)).map(|(g, (a, q))| g * (a - q)).sum() };
    let gamma1 = TradingStrategy::new(
        gamma0
            .gamma
            .iter()
            .map(|g| g.iter().zip(&g0).map(|(a, b)| a - b).collect())
            .collect(),
    )?;
    let b1: Vec<f64> = b0.iter().zip(grid.x()).map(|(b, x)| b + dot(x)).collect();
    let c1: Vec<f64> = c0.iter().zip(grid.y()).map(|(c, y)| c - dot(y)).collect();

    let pin = b1[anchor];
    let b2: Vec<f64> = b1.iter().map(|b| b - pin).collect();
    let c2: Vec<f64> = c1.iter().map(|c| c + pin).collect();

    let (mb, nc) = (mu.integrate(&b2), nu.integrate(&c2));
    let b3: Vec<f64> = b2.iter().map(|b| b - mb).collect();
    let c3: Vec<f64> = c2.iter().map(|c| c - nc).collect();

    let triple = MotDualTriple {
        b: b3,
        c: c3,
        gamma: gamma1,
    };
    let rebuilt = triple.table(grid)?;
    let reconstruction = rebuilt
        .values()
        .iter()
        .zip(a.values())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
    Ok(MotDecomposition {
        payoff_norm: a.ell_norm(grid),
        b_norm: triple.b_norm(grid),
        c_norm: triple.c_norm(grid),
        c_anchor_norm: weighted_norm(&c2, grid, Axis::Y),
        reconstruction,
        centering: mu.integrate(&triple.b).abs().max(nu.integrate(&triple.c).abs()),
        triple,
    })
}

/// `|y − x₀| − |x − x₀| − sign(x − x₀)(y − x)`; nonnegative, and zero on
/// every martingale coupling whose marginals' potentials touch at `x₀`.
pub fn touching_witness(grid: &SupportGrid, x0: f64) -> PayoffTable {
    PayoffTable::from_fn(grid, |x, y| {
        let (x, y) = (x[0], y[0]);
        let s = if x > x0 {
            1.0
        } else if x < x0 {
            -1.0
        } else {
            0.0
        };
        (y - x0).abs() - (x - x0).abs() - s * (y - x)
    })
}

/// Points strictly inside the support hull where `u_μ = u_ν`, scanning atoms
/// and midpoints between adjacent atoms.
pub fn touching_points(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Vec<f64>> {
    require_marginals(grid, mu, nu)?;
    let xs = grid.coords(Axis::X);
    let ys = grid.coords(Axis::Y);
    let mut atoms: Vec<f64> = mu.support().map(|i| xs[i]).chain(nu.support().map(|j| ys[j])).collect();
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    let (lo, hi) = match (atoms.first(), atoms.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Ok(Vec::new()),
    };
    let tol = POTENTIAL_TOL * (1.0 + (hi - lo));
    let mut candidates = atoms.clone();
    candidates.extend(atoms.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.sort_by(f64::total_cmp);
    Ok(candidates
        .into_iter()
        .filter(|&t| t > lo && t < hi)
        .filter(|&t| {
            (potential_at(&xs, mu.weights(), t) - potential_at(&ys, nu.weights(), t)).abs() <= tol
        })
        .collect())
}

/// Per-cell polar scan for martingale couplings plus, at each touching
/// point `x₀`, the crossing rectangles and the witness payoff.
pub fn polar_scan_mot(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    subset: Option<&[(usize, usize)]>,
) -> Result<PolarCertificate> {
    grid.require_line()?;
    require_convex_order(grid, mu, nu)?;
    let program = Program::new(grid, mu.weights(), nu.weights()).martingale(true);
    let scanned = scan_cells(grid, subset)?;

    let xs = grid.coords(Axis::X);
    let ys = grid.coords(Axis::Y);
    let points = touching_points(grid, mu, nu)?;
    let rectangles: Vec<Vec<(usize, usize)>> = points
        .iter()
        .map(|&x0| {
            let mut cells = Vec::new();
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    if (x < x0 && y > x0) || (x > x0 && y < x0) {
                        cells.push((i, j));
                    }
                }
            }
            cells
        })
        .collect();

    let mut all: Vec<(usize, usize)> = scanned.iter().chain(rectangles.iter().flatten()).copied().collect();
    all.sort_unstable();
    all.dedup();
    let masses: BTreeMap<(usize, usize), f64> =
        all.iter().copied().zip(max_cell_masses(&program, &all)?).collect();
    let mut cert = PolarCertificate {
        scanned: scanned.len(),
        cells: scanned
            .iter()
            .filter(|c| masses[c] <= POLAR_TOL)
            .map(|&(i, j)| PolarCell { i, j, max_mass: masses[&(i, j)] })
            .collect(),
        kellerer: None,
        touching: Vec::new(),
    };

    for (x0, rect) in points.into_iter().zip(rectangles) {
        let witness = touching_witness(grid, x0);
        let (_, best) = program.solve_primal(witness.values())?;
        let witness_value = best.pair(witness.values());
        cert.touching.push(TouchingPoint {
            x0,
            rectangle_max_mass: rect
                .iter()
                .map(|c| masses[c])
                .fold(0.0f64, f64::max),
            rectangle: rect,
            witness_min: witness.values().iter().copied().fold(f64::INFINITY, f64::min),
            witness,
            witness_value,
        });
    }
    Ok(cert)
}

impl TouchingPoint {
    /// Every rectangle cell is polar, the witness is nonnegative and no
    /// martingale coupling charges it.
    pub fn certified(&self) -> bool {
        self.rectangle_max_mass <= POLAR_TOL && self.witness_min >= -1e-12 && self.witness_value <= 1e-9
    }
}

/// Bounds on the hedge components the shortfall estimate applies to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeNorms {
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub shift: usize,
    /// `Σ |η_x − μ|(t) (1 + |t|)`.
    pub dist_x: f64,
    pub dist_y: f64,
    /// `∫ |y − x| dη`.
    pub defect: f64,
    /// Mass of `η` off the diagonal.
    pub offdiag_mass: f64,
    /// `B_b dist_x + B_c dist_y + G defect − 1`.
    pub shortfall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSequenceReport {
    pub n: usize,
    pub norms: HedgeNorms,
    pub rows: Vec<GapRow>,
}

/// Shifted-diagonal couplings on the uniform `n`-point grid of `[0, 1]`: how
/// far each is from the martingale couplings of the uniform marginals, and
/// the resulting upper bound on what a norm-bounded hedge can gain against
/// the indicator of the off-diagonal set.
pub fn gap_sequence(n: usize, shifts: &[usize], norms: HedgeNorms) -> Result<GapSequenceReport> {
    if n < 2 {
        return Err(CotError::Precondition("the grid needs at least two points".into()));
    }
    let step = (n - 1) as f64;
    let point = |i: usize| i as f64 / step;
    let uniform = 1.0 / n as f64;
    let mut rows = Vec::with_capacity(shifts.len());
    for &s in shifts {
        if s == 0 || s >= n {
            return Err(CotError::Precondition(format!("shift {s} outside 1..{n}")));
        }
        let pairs = n - s;
        let w = 1.0 / pairs as f64;
        // η_x charges 0..pairs, η_y charges s..n, each with weight w
        let dist = |charged: std::ops::Range<usize>| -> f64 {
            (0..n)
                .map(|i| {
                    let eta = if charged.contains(&i) { w } else { 0.0 };
                    (eta - uniform).abs() * (1.0 + point(i))
                })
                .sum()
        };
        let dist_x = dist(0..pairs);
        let dist_y = dist(s..n);
        let defect = s as f64 / step;
        // equal weights, so the mass is the share of pairs off the diagonal
        let off = (0..pairs).filter(|&i| i + s != i).count();
        let offdiag_mass = off as f64 / pairs as f64;
        rows.push(GapRow {
            shift: s,
            dist_x,
            dist_y,
            defect,
            offdiag_mass,
            shortfall: norms.b * dist_x + norms.c * dist_y + norms.gamma * defect - offdiag_mass,
        });
    }
    Ok(GapSequenceReport { n, norms, rows })
}
