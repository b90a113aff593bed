//! Classical optimal transport on a finite grid: primal and dual solves,
//! bounded dual decompositions, Kellerer polar sets, quasi-sure
//! superhedging and the quotient distance to the hedging subspace.

use cot_lab_lp::{solve, Bounds, LinearProgram, Relation, Sense, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::measures::{norm, Axis, Coupling, DiscreteMeasure, SupportGrid};
use crate::program::Program;

/// Relative tolerance on `|primal − dual|`.
pub const GAP_TOL: f64 = 1e-7;
/// Largest violation of the superhedging inequality a dual optimizer may show.
pub const ATTAINMENT_TOL: f64 = 1e-9;
/// Largest `η(ω) · slack(ω)` allowed between the optimal coupling and hedge.
pub const COMPLEMENTARITY_TOL: f64 = 1e-8;
/// Largest per-cell mass for a cell to count as polar.
pub const POLAR_TOL: f64 = 1e-10;
/// Grid size above which callers should warn before a per-cell scan.
pub const LARGE_SCAN: usize = 10_000;

/// Dense table over `X × Y`, row-major in `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl PayoffTable {
    pub fn new(m: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * n {
            return Err(CotError::Shape(format!(
                "{} entries for a {m}x{n} table",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(CotError::Shape(format!(
                "table entry ({}, {}) is not finite",
                k / n,
                k % n
            )));
        }
        Ok(PayoffTable { m, n, values })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        PayoffTable {
            m,
            n,
            values: vec![0.0; m * n],
        }
    }

    pub fn from_fn(grid: &SupportGrid, f: impl Fn(&[f64], &[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cells());
        for x in grid.x() {
            for y in grid.y() {
                values.push(f(x, y));
            }
        }
        PayoffTable {
            m: grid.m(),
            n: grid.n(),
            values,
        }
    }

    /// `(h ⊕ g)(xᵢ, y_j) = h_i + g_j`.
    pub fn direct_sum(h: &[f64], g: &[f64]) -> Self {
        let mut values = Vec::with_capacity(h.len() * g.len());
        for a in h {
            for b in g {
                values.push(a + b);
            }
        }
        PayoffTable {
            m: h.len(),
            n: g.len(),
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max |f(ω)| / ℓ(ω)`.
    pub fn ell_norm(&self, grid: &SupportGrid) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.m {
            for j in 0..self.n {
                best = best.max(self.get(i, j).abs() / grid.ell(i, j));
            }
        }
        best
    }

    pub fn scaled(&self, t: f64) -> PayoffTable {
        self.map(|v| v * t)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PayoffTable {
        PayoffTable {
            m: self.m,
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &PayoffTable) -> PayoffTable {
        PayoffTable {
            m: self.m,
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &PayoffTable) -> PayoffTable {
        self.add(&other.scaled(-1.0))
    }

    pub(crate) fn require_on(&self, grid: &SupportGrid, what: &str) -> Result<()> {
        if self.m != grid.m() || self.n != grid.n() {
            return Err(CotError::Shape(format!(
                "{what} is {}x{}, grid is {}x{}",
                self.m,
                self.n,
                grid.m(),
                grid.n()
            )));
        }
        Ok(())
    }
}

/// Normalizing element of the payoff space: the constant `1` for bounded
/// payoffs, `ℓ` for linear-growth payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderUnit {
    Constant,
    Ell,
}

impl OrderUnit {
    pub fn at(self, grid: &SupportGrid, i: usize, j: usize) -> f64 {
        match self {
            OrderUnit::Constant => 1.0,
            OrderUnit::Ell => grid.ell(i, j),
        }
    }
}

/// A superhedging portfolio `c·e + h ⊕ g + T(γ) + Σ a_k f_k + ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hedge {
    pub cash: f64,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    /// One `d`-vector per `X` point.
    pub gamma: Vec<Vec<f64>>,
    pub moments: Vec<f64>,
    /// Polar slack as `(i, j, value)`.
    pub zeta: Vec<(usize, usize, f64)>,
}

impl Hedge {
    pub fn zero(grid: &SupportGrid, moments: usize) -> Self {
        Hedge {
            cash: 0.0,
            h: vec![0.0; grid.m()],
            g: vec![0.0; grid.n()],
            gamma: vec![vec![0.0; grid.dim()]; grid.m()],
            moments: vec![0.0; moments],
            zeta: Vec::new(),
        }
    }

    /// Everything except the cash position, as a table.
    pub fn portfolio(&self, grid: &SupportGrid, moments: &[PayoffTable]) -> PayoffTable {
        let n = grid.n();
        let mut t = PayoffTable::from_fn(grid, |_, _| 0.0);
        for i in 0..grid.m() {
            for j in 0..n {
                let mut v = self.h[i] + self.g[j];
                for ((gr, xr), yr) in self.gamma[i].iter().zip(&grid.x()[i]).zip(&grid.y()[j]) {
                    v += gr * (xr - yr);
                }
                for (a, f) in self.moments.iter().zip(moments) {
                    v += a * f.get(i, j);
                }
                t.values[i * n + j] = v;
            }
        }
        for &(i, j, z) in &self.zeta {
            t.values[i * n + j] += z;
        }
        t
    }

    pub fn check_shape(&self, grid: &SupportGrid, moments: usize) -> Result<()> {
        let ok = self.h.len() == grid.m()
            && self.g.len() == grid.n()
            && self.gamma.len() == grid.m()
            && self.gamma.iter().all(|g| g.len() == grid.dim())
            && self.moments.len() == moments
            && self.zeta.iter().all(|&(i, j, _)| i < grid.m() && j < grid.n());
        if ok {
            Ok(())
        } else {
            Err(CotError::Shape("hedge does not match the grid".into()))
        }
    }
}

/// A duality problem as data: everything needed to audit a coupling and a
/// hedge without solving anything.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub grid: &'a SupportGrid,
    pub mu: &'a [f64],
    pub nu: &'a [f64],
    pub payoff: &'a PayoffTable,
    pub moments: &'a [PayoffTable],
    pub martingale: bool,
    pub unit: OrderUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityResiduals {
    /// Largest marginal mismatch of the coupling.
    pub marginal: f64,
    /// Largest martingale defect norm relative to row mass.
    pub defect: f64,
    /// Largest `|η(f_k)|`.
    pub moments: f64,
    /// Most negative coupling entry, as a positive number.
    pub negativity: f64,
    /// Largest shortfall `f − (c·e + hedge)` over cells, zero when dominated.
    pub domination: f64,
    /// Largest `η(ω) · (c·e + hedge − f)(ω)`.
    pub complementarity: f64,
    /// `max(|μ(h)|, |ν(g)|)`.
    pub centering: f64,
    /// `η(f)` recomputed from the coupling.
    pub primal: f64,
    /// Cash position of the hedge.
    pub dual: f64,
}

impl DualityResiduals {
    /// Whether every residual meets the library tolerances for a payoff of
    /// sup norm `scale`.
    pub fn certified(&self, scale: f64) -> bool {
        let s = 1.0 + scale;
        let gap = (self.primal - self.dual).abs();
        self.marginal <= 1e-9
            && self.defect <= 1e-9
            && self.moments <= 1e-9 * s
            && self.negativity == 0.0
            && self.domination <= ATTAINMENT_TOL * s
            && self.complementarity <= COMPLEMENTARITY_TOL * s
            && self.centering <= 1e-9 * s
            && gap <= GAP_TOL * (1.0 + self.primal.abs())
    }
}

/// Recomputes every residual of a (coupling, hedge) pair from the instance.
pub fn audit(inst: &Instance, eta: &Coupling, hedge: &Hedge) -> Result<DualityResiduals> {
    let grid = inst.grid;
    if eta.rows() != grid.m() || eta.cols() != grid.n() {
        return Err(CotError::Shape("coupling does not match the grid".into()));
    }
    inst.payoff.require_on(grid, "payoff")?;
    hedge.check_shape(grid, inst.moments.len())?;

    let rows = eta.x_marginal();
    let cols = eta.y_marginal();
    let marginal = rows
        .iter()
        .zip(inst.mu)
        .chain(cols.iter().zip(inst.nu))
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    let defect = if inst.martingale {
        eta.martingale_defect(grid)
            .iter()
            .zip(&rows)
            .fold(0.0f64, |acc, (d, &mass)| acc.max(norm(d) / mass.max(1.0)))
    } else {
        0.0
    };
    let moments = inst
        .moments
        .iter()
        .fold(0.0f64, |acc, f| acc.max(eta.pair(f.values()).abs()));
    let negativity = eta.dense().iter().fold(0.0f64, |acc, &w| acc.max(-w));

    let port = hedge.portfolio(grid, inst.moments);
    let mut domination = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..grid.m() {
        for j in 0..grid.n() {
            let slack = hedge.cash * inst.unit.at(grid, i, j) + port.get(i, j)
                - inst.payoff.get(i, j);
            domination = domination.max(-slack);
            complementarity = complementarity.max(eta.get(i, j) * slack.abs());
        }
    }
    let mu_h: f64 = inst.mu.iter().zip(&hedge.h).map(|(a, b)| a * b).sum();
    let nu_g: f64 = inst.nu.iter().zip(&hedge.g).map(|(a, b)| a * b).sum();
    Ok(DualityResiduals {
        marginal,
        defect,
        moments,
        // adding zero turns max(0, −0) into +0
        negativity: negativity + 0.0,
        domination: domination + 0.0,
        complementarity,
        centering: mu_h.abs().max(nu_g.abs()),
        primal: eta.pair(inst.payoff.values()),
        dual: hedge.cash,
    })
}

/// Cross-check of a martingale transport value against the same problem
/// normalized to `η(ℓ) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub m_star: f64,
    pub normalized_primal: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub coupling: Coupling,
    pub hedge: Hedge,
    pub unit: OrderUnit,
    pub residuals: DualityResiduals,
    pub scaling: Option<ScalingCheck>,
}

impl DualityReport {
    /// Strong duality within `GAP_TOL` and every residual certified.
    pub fn certified(&self, payoff: &PayoffTable) -> bool {
        self.gap <= GAP_TOL * (1.0 + self.primal.abs())
            && self.residuals.certified(payoff.sup_norm())
    }
}

pub(crate) fn require_marginals(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<()> {
    mu.require_on(grid, Axis::X)?;
    nu.require_on(grid, Axis::Y)?;
    mu.require_probability("mu")?;
    nu.require_probability("nu")?;
    Ok(())
}

/// Solves primal and dual independently and audits the pair.
pub(crate) fn solve_pair(
    program: &Program,
    payoff: &PayoffTable,
    min_norm_moments: bool,
) -> Result<DualityReport> {
    let (psol, coupling) = program.solve_primal(payoff.values())?;
    let (dsol, mut hedge, dlp, layout) = program.solve_dual(payoff.values())?;
    if min_norm_moments && !program.moments.is_empty() {
        hedge = program.min_norm_dual(dlp, &layout, dsol.objective)?;
    }
    let inst = Instance {
        grid: program.grid,
        mu: program.mu,
        nu: program.nu,
        payoff,
        moments: program.moments,
        martingale: program.martingale,
        unit: OrderUnit::Constant,
    };
    let residuals = audit(&inst, &coupling, &hedge)?;
    Ok(DualityReport {
        primal: psol.objective,
        dual: hedge.cash,
        gap: (psol.objective - hedge.cash).abs(),
        coupling,
        hedge,
        unit: OrderUnit::Constant,
        residuals,
        scaling: None,
    })
}

/// `max η(f)` over couplings of `μ`, `ν` and `min c` over
/// `c + h ⊕ g ≥ f` with centered `h`, `g`.
pub fn solve_ot(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: &PayoffTable,
) -> Result<DualityReport> {
    require_marginals(grid, mu, nu)?;
    f.require_on(grid, "payoff")?;
    let program = Program::new(grid, mu.weights(), nu.weights());
    solve_pair(&program, f, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtDecomposition {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Nonpositive remainder `z₀ − b ⊕ c`.
    pub n: PayoffTable,
    pub radius: f64,
    pub b_sup: f64,
    pub c_sup: f64,
    pub n_min: f64,
    pub n_max: f64,
    /// `max |b ⊕ c + n − z₀|`.
    pub reconstruction: f64,
    /// `max(|μ(b)|, |ν(c)|)`.
    pub centering: f64,
    /// `max(|μ(b₀)|, |ν(c₀)|)`; the bounds are guaranteed when this is zero.
    pub input_centering: f64,
}

impl OtDecomposition {
    /// `‖b‖, ‖c‖ ≤ 3R` and `−7R ≤ n ≤ 0`, with slack `tol · R`.
    pub fn within_bounds(&self, tol: f64) -> bool {
        let r = self.radius;
        self.b_sup <= 3.0 * r + tol * r
            && self.c_sup <= 3.0 * r + tol * r
            && self.n_min >= -7.0 * r - tol * r
            && self.n_max <= 0.0
    }
}

/// Rewrites `z₀ = b₀ ⊕ c₀ + n₀` (nonpositive `n₀`, `‖z₀‖_∞ ≤ R`) with
/// bounded parts: truncate at `2R`, recenter by `μ` resp. `ν`, and collect
/// the rest into the remainder. For centered `b₀`, `c₀` the result satisfies
/// `‖b‖, ‖c‖ ≤ 3R` and `−7R ≤ n ≤ 0`; uncentered inputs are accepted and
/// reported through `input_centering`.
pub fn normalize_ot_decomposition(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    b0: &[f64],
    c0: &[f64],
    n0: &PayoffTable,
    radius: f64,
) -> Result<OtDecomposition> {
    let (m, n) = (b0.len(), c0.len());
    if mu.len() != m || nu.len() != n || n0.rows() != m || n0.cols() != n {
        return Err(CotError::Shape("decomposition parts do not match the marginals".into()));
    }
    if radius.is_nan() || radius <= 0.0 {
        return Err(CotError::Precondition("radius must be positive".into()));
    }
    mu.require_probability("mu")?;
    nu.require_probability("nu")?;
    if let Some(k) = n0.values().iter().position(|&v| v > 0.0) {
        return Err(CotError::Precondition(format!(
            "n0 is positive at cell ({}, {})",
            k / n,
            k % n
        )));
    }
    let z0 = PayoffTable::direct_sum(b0, c0).add(n0);
    for (k, &v) in z0.values().iter().enumerate() {
        if v.abs() > radius * (1.0 + 1e-12) {
            return Err(CotError::Precondition(format!(
                "|z0| = {} exceeds R = {radius} at cell ({}, {})",
                v.abs(),
                k / n,
                k % n
            )));
        }
    }

    let cap = 2.0 * radius;
    let b1: Vec<f64> = b0.iter().map(|&v| v.min(cap)).collect();
    let c1: Vec<f64> = c0.iter().map(|&v| v.min(cap)).collect();
    let (mb, nc) = (mu.integrate(&b1), nu.integrate(&c1));
    let b2: Vec<f64> = b1.iter().map(|v| v - mb).collect();
    let c2: Vec<f64> = c1.iter().map(|v| v - nc).collect();
    // nonpositive by construction for centered inputs; clamp rounding residue only
    let residue = 1e-12 * (1.0 + radius);
    let n2 = z0
        .sub(&PayoffTable::direct_sum(&b2, &c2))
        .map(|v| if v > 0.0 && v <= residue { 0.0 } else { v });

    let rebuilt = PayoffTable::direct_sum(&b2, &c2).add(&n2);
    let reconstruction = rebuilt
        .values()
        .iter()
        .zip(z0.values())
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(OtDecomposition {
        b_sup: sup(&b2),
        c_sup: sup(&c2),
        n_min: n2.values().iter().copied().fold(f64::INFINITY, f64::min),
        n_max: n2.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        centering: mu.integrate(&b2).abs().max(nu.integrate(&c2).abs()),
        input_centering: mu.integrate(b0).abs().max(nu.integrate(c0).abs()),
        reconstruction,
        radius,
        b: b2,
        c: c2,
        n: n2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCell {
    pub i: usize,
    pub j: usize,
    /// Largest mass any admissible coupling puts on the cell.
    pub max_mass: f64,
}

/// Zero-mass atoms `A ⊂ X`, `B ⊂ Y` and whether `(A × Y) ∪ (X × B)`
/// matches the polar cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KellererCover {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// Every polar cell lies in the cover.
    pub covered: bool,
    /// Every scanned cover cell is polar.
    pub exact: bool,
}

/// A point `x₀` where the potentials of the marginals touch, with the
/// rectangles it forces to be polar and the witness payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchingPoint {
    pub x0: f64,
    /// Cells of `(−∞, x₀) × (x₀, ∞)` and `(x₀, ∞) × (−∞, x₀)`.
    pub rectangle: Vec<(usize, usize)>,
    /// Largest per-cell maximal mass over the rectangle.
    pub rectangle_max_mass: f64,
    /// `|y − x₀| − |x − x₀| − sign(x − x₀)(y − x)`.
    pub witness: PayoffTable,
    pub witness_min: f64,
    /// `max η(witness)` over admissible couplings.
    pub witness_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCertificate {
    pub cells: Vec<PolarCell>,
    pub scanned: usize,
    pub kellerer: Option<KellererCover>,
    pub touching: Vec<TouchingPoint>,
}

impl PolarCertificate {
    pub fn is_polar(&self, i: usize, j: usize) -> bool {
        self.cells.iter().any(|c| c.i == i && c.j == j)
    }
}

/// Largest mass each listed cell can carry; cells run in parallel.
pub(crate) fn max_cell_masses(program: &Program, cells: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n = program.grid.n();
    cells
        .par_iter()
        .map(|&(i, j)| {
            let mut obj = vec![0.0; program.grid.cells()];
            obj[i * n + j] = 1.0;
            let (lp, _) = program.primal(&obj, Sense::Maximize);
            let sol = solve(&lp)?;
            match sol.status {
                Status::Optimal => Ok(sol.objective.max(0.0)),
                Status::Infeasible => Err(CotError::UnexpectedStatus("infeasible")),
                Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
            }
        })
        .collect()
}

pub(crate) fn scan_cells(
    grid: &SupportGrid,
    subset: Option<&[(usize, usize)]>,
) -> Result<Vec<(usize, usize)>> {
    match subset {
        Some(cells) => {
            if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| i >= grid.m() || j >= grid.n()) {
                return Err(CotError::Shape(format!("cell ({i}, {j}) outside the grid")));
            }
            Ok(cells.to_vec())
        }
        None => Ok((0..grid.m())
            .flat_map(|i| (0..grid.n()).map(move |j| (i, j)))
            .collect()),
    }
}

/// Per-cell polar scan for transport couplings, with the Kellerer cover by
/// zero-mass atoms. `subset` restricts the scan to the listed cells.
pub fn polar_scan_ot(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    subset: Option<&[(usize, usize)]>,
) -> Result<PolarCertificate> {
    require_marginals(grid, mu, nu)?;
    let program = Program::new(grid, mu.weights(), nu.weights());
    let mut cert = polar_scan_cells(&program, subset)?;
    let cells = scan_cells(grid, subset)?;
    let polar_at = |i: usize, j: usize| cert.is_polar(i, j);

    let a: Vec<usize> = (0..grid.m()).filter(|&i| mu.weights()[i] == 0.0).collect();
    let b: Vec<usize> = (0..grid.n()).filter(|&j| nu.weights()[j] == 0.0).collect();
    let in_cover = |i: usize, j: usize| a.contains(&i) || b.contains(&j);
    let covered = cert.cells.iter().all(|c| in_cover(c.i, c.j));
    let exact = cells
        .iter()
        .all(|&(i, j)| !in_cover(i, j) || polar_at(i, j));
    cert.kellerer = Some(KellererCover {
        a,
        b,
        covered,
        exact,
    });
    Ok(cert)
}

/// Per-cell scan of any transport program; `subset` restricts the cells.
pub(crate) fn polar_scan_cells(
    program: &Program,
    subset: Option<&[(usize, usize)]>,
) -> Result<PolarCertificate> {
    let cells = scan_cells(program.grid, subset)?;
    let masses = max_cell_masses(program, &cells)?;
    let polar = cells
        .iter()
        .zip(&masses)
        .filter(|(_, &w)| w <= POLAR_TOL)
        .map(|(&(i, j), &w)| PolarCell { i, j, max_mass: w })
        .collect();
    Ok(PolarCertificate {
        scanned: cells.len(),
        cells: polar,
        kellerer: None,
        touching: Vec::new(),
    })
}

/// Quasi-sure superhedging of a bounded payoff: domination is required off
/// the polar cells only, and the polar slack `ζ` covers the rest.
pub fn bb_superhedge(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    xi: &PayoffTable,
) -> Result<DualityReport> {
    require_marginals(grid, mu, nu)?;
    xi.require_on(grid, "payoff")?;
    let cert = polar_scan_ot(grid, mu, nu, None)?;
    quasi_sure(Program::new(grid, mu.weights(), nu.weights()), &cert, xi, false)
}

/// Solves on the non-polar cells and fills `ζ` on the polar ones.
pub(crate) fn quasi_sure(
    program: Program,
    cert: &PolarCertificate,
    xi: &PayoffTable,
    min_norm_moments: bool,
) -> Result<DualityReport> {
    let grid = program.grid;
    let mut mask = vec![true; grid.cells()];
    for c in &cert.cells {
        mask[c.i * grid.n() + c.j] = false;
    }
    let program = program.active(Some(&mask));
    let mut report = solve_pair(&program, xi, min_norm_moments)?;
    let port = report.hedge.portfolio(grid, program.moments);
    for c in &cert.cells {
        let short = xi.get(c.i, c.j) - report.hedge.cash - port.get(c.i, c.j);
        if short > 0.0 {
            report.hedge.zeta.push((c.i, c.j, short));
        }
    }
    let inst = Instance {
        grid,
        mu: program.mu,
        nu: program.nu,
        payoff: xi,
        moments: program.moments,
        martingale: program.martingale,
        unit: OrderUnit::Constant,
    };
    report.residuals = audit(&inst, &report.coupling, &report.hedge)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientDistance {
    /// `max |η(a)|` over signed annihilators of total variation one.
    pub sup_side: f64,
    /// `min ‖a − h ⊕ g‖_∞` over centered `h`, `g`.
    pub inf_side: f64,
    /// Optimal signed measure of the sup side.
    pub measure: Vec<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
}

impl QuotientDistance {
    pub fn discrepancy(&self) -> f64 {
        (self.sup_side - self.inf_side).abs()
    }
}

/// Distance from `a` to the centered static hedges, computed once as a
/// supremum over annihilating signed measures and once as a Chebyshev
/// approximation.
pub fn quotient_distance(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    a: &PayoffTable,
) -> Result<QuotientDistance> {
    mu.require_on(grid, Axis::X)?;
    nu.require_on(grid, Axis::Y)?;
    a.require_on(grid, "payoff")?;
    let (m, n) = (grid.m(), grid.n());
    let cells = m * n;

    // sup side: η = p − q, η_x = tμ, η_y = tν, Σ(p + q) = 1
    let mut sup = LinearProgram::new(Sense::Maximize, 2 * cells + 1);
    let t = 2 * cells;
    sup.set_bounds(t, Bounds::FREE);
    for c in 0..cells {
        sup.set_cost(c, a.values()[c]);
        sup.set_cost(cells + c, -a.values()[c]);
    }
    for i in 0..m {
        let row = (0..n).flat_map(|j| [(i * n + j, 1.0), (cells + i * n + j, -1.0)]);
        sup.add_row(row.chain([(t, -mu.weights()[i])]), Relation::Eq, 0.0);
    }
    for j in 0..n {
        let col = (0..m).flat_map(|i| [(i * n + j, 1.0), (cells + i * n + j, -1.0)]);
        sup.add_row(col.chain([(t, -nu.weights()[j])]), Relation::Eq, 0.0);
    }
    sup.add_row((0..2 * cells).map(|v| (v, 1.0)), Relation::Eq, 1.0);
    let s = solve(&sup)?;
    if s.status != Status::Optimal {
        return Err(CotError::UnexpectedStatus("not optimal"));
    }
    let measure: Vec<f64> = (0..cells).map(|c| s.x[c] - s.x[cells + c]).collect();

    // inf side: −c ≤ a − h ⊕ g ≤ c
    let mut inf = LinearProgram::new(Sense::Minimize, 1 + m + n);
    for v in 0..1 + m + n {
        inf.set_bounds(v, Bounds::FREE);
    }
    inf.set_cost(0, 1.0);
    for i in 0..m {
        for j in 0..n {
            let v = a.get(i, j);
            inf.add_row([(0, 1.0), (1 + i, 1.0), (1 + m + j, 1.0)], Relation::Ge, v);
            inf.add_row([(0, 1.0), (1 + i, -1.0), (1 + m + j, -1.0)], Relation::Ge, -v);
        }
    }
    inf.add_row(mu.weights().iter().enumerate().map(|(i, &w)| (1 + i, w)), Relation::Eq, 0.0);
    inf.add_row(
        nu.weights().iter().enumerate().map(|(j, &w)| (1 + m + j, w)),
        Relation::Eq,
        0.0,
    );
    let q = solve(&inf)?;
    if q.status != Status::Optimal {
        return Err(CotError::UnexpectedStatus("not optimal"));
    }
    Ok(QuotientDistance {
        sup_side: s.objective,
        inf_side: q.objective,
        measure,
        h: q.x[1..1 + m].to_vec(),
        g: q.x[1 + m..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> (SupportGrid, DiscreteMeasure, DiscreteMeasure) {
        let g = SupportGrid::line(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        (
            g,
            DiscreteMeasure::uniform(Axis::X, 2),
            DiscreteMeasure::uniform(Axis::Y, 2),
        )
    }

    fn diag() -> PayoffTable {
        PayoffTable::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn diagonal_indicator() {
        let (g, mu, nu) = two_point();
        let r = solve_ot(&g, &mu, &nu, &diag()).unwrap();
        assert!((r.primal - 1.0).abs() < 1e-12);
        assert!((r.dual - 1.0).abs() < 1e-12);
        assert!(r.certified(&diag()));
    }

    #[test]
    fn zero_and_static_payoffs() {
        let (g, mu, nu) = two_point();
        let r = solve_ot(&g, &mu, &nu, &PayoffTable::zeros(2, 2)).unwrap();
        assert!(r.primal.abs() < 1e-12 && r.dual.abs() < 1e-12);
        let f = PayoffTable::direct_sum(&[1.0, -1.0], &[-3.0, 3.0]);
        let r = solve_ot(&g, &mu, &nu, &f).unwrap();
        assert!(r.primal.abs() < 1e-12 && r.dual.abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized() {
        let g = SupportGrid::line(&[0.0], &[0.0]).unwrap();
        let mu = DiscreteMeasure::new(Axis::X, vec![0.0]).unwrap();
        let nu = DiscreteMeasure::new(Axis::Y, vec![1.0]).unwrap();
        assert!(solve_ot(&g, &mu, &nu, &PayoffTable::zeros(1, 1)).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let (_, mu, nu) = two_point();
        let d = normalize_ot_decomposition(&mu, &nu, &[0.0; 2], &[0.0; 2], &PayoffTable::zeros(2, 2), 1.0)
            .unwrap();
        assert_eq!(d.b, vec![0.0; 2]);
        assert_eq!(d.n, PayoffTable::zeros(2, 2));

        let d = normalize_ot_decomposition(
            &mu,
            &nu,
            &[10.0, 10.0],
            &[-10.0, -10.0],
            &PayoffTable::zeros(2, 2),
            1.0,
        )
        .unwrap();
        assert_eq!(d.b, vec![0.0; 2]);
        assert_eq!(d.c, vec![0.0; 2]);
        assert_eq!(d.n, PayoffTable::zeros(2, 2));
        assert_eq!(d.input_centering, 10.0);
    }

    #[test]
    fn decomposition_rejects_large_input() {
        let (_, mu, nu) = two_point();
        let err = normalize_ot_decomposition(
            &mu,
            &nu,
            &[2.0, -2.0],
            &[0.0, 0.0],
            &PayoffTable::zeros(2, 2),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, CotError::Precondition(s) if s.contains("cell (0, 0)")));
    }

    #[test]
    fn polar_zero_atom_row() {
        let g = SupportGrid::line(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let mu = DiscreteMeasure::new(Axis::X, vec![1.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::uniform(Axis::Y, 2);
        let cert = polar_scan_ot(&g, &mu, &nu, None).unwrap();
        let cells: Vec<_> = cert.cells.iter().map(|c| (c.i, c.j)).collect();
        assert_eq!(cells, vec![(1, 0), (1, 1)]);
        let k = cert.kellerer.unwrap();
        assert_eq!(k.a, vec![1]);
        assert!(k.b.is_empty() && k.covered && k.exact);

        let (g, mu, nu) = two_point();
        assert!(polar_scan_ot(&g, &mu, &nu, None).unwrap().cells.is_empty());
    }

    #[test]
    fn bb_ignores_polar_row() {
        let g = SupportGrid::line(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let mu = DiscreteMeasure::new(Axis::X, vec![1.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::uniform(Axis::Y, 2);
        let xi = PayoffTable::new(2, 2, vec![0.0, 0.0, 10.0, 10.0]).unwrap();
        let r = bb_superhedge(&g, &mu, &nu, &xi).unwrap();
        assert!(r.primal.abs() < 1e-12);
        assert!(r.hedge.cash.abs() < 1e-12);
        let port = r.hedge.portfolio(&g, &[]);
        for j in 0..2 {
            assert!(r.hedge.cash + port.get(1, j) >= 10.0 - 1e-9);
        }
        assert!(r.residuals.certified(xi.sup_norm()));
    }

    #[test]
    fn bb_without_polar_cells_matches_ot() {
        let (g, mu, nu) = two_point();
        let a = bb_superhedge(&g, &mu, &nu, &diag()).unwrap();
        let b = solve_ot(&g, &mu, &nu, &diag()).unwrap();
        assert!(a.hedge.zeta.is_empty());
        assert!((a.dual - b.dual).abs() < 1e-12);
    }

    #[test]
    fn quotient_examples() {
        let (g, mu, nu) = two_point();
        let q = quotient_distance(&g, &mu, &nu, &diag()).unwrap();
        assert!((q.sup_side - q.inf_side).abs() < 1e-9);
        assert!((q.inf_side - 1.0).abs() < 1e-9);
        let q10 = quotient_distance(&g, &mu, &nu, &diag().scaled(10.0)).unwrap();
        assert!((q10.sup_side - 10.0 * q.sup_side).abs() < 1e-9);
        let s = PayoffTable::direct_sum(&[1.0, -1.0], &[2.0, -2.0]);
        let q = quotient_distance(&g, &mu, &nu, &s).unwrap();
        assert!(q.sup_side.abs() < 1e-9 && q.inf_side.abs() < 1e-9);
    }
}
