//! Grids, discrete measures, couplings, potential functions and convex order.

use cot_lab_lp::{solve, Certificate, LinearProgram, Relation, Sense, Status};
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};

pub type Point = Vec<f64>;

/// Tolerance for "this measure has mass one".
pub const MASS_TOL: f64 = 1e-9;
/// Per-coordinate tolerance for barycenter equality.
pub const BARYCENTER_TOL: f64 = 1e-9;
/// Relative tolerance for potential dominance.
pub const POTENTIAL_TOL: f64 = 1e-10;

pub(crate) fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Finite supports `X` and `Y` in `R^d`. Cells of `Ω = X × Y` are indexed
/// row-major, `i * n + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGrid {
    dim: usize,
    x: Vec<Point>,
    y: Vec<Point>,
}

impl SupportGrid {
    pub fn new(dim: usize, x: Vec<Point>, y: Vec<Point>) -> Result<Self> {
        if dim == 0 {
            return Err(CotError::Shape("dimension must be positive".into()));
        }
        if x.is_empty() || y.is_empty() {
            return Err(CotError::Shape("both axes need at least one point".into()));
        }
        for (name, pts) in [("X", &x), ("Y", &y)] {
            for (k, p) in pts.iter().enumerate() {
                if p.len() != dim {
                    return Err(CotError::Shape(format!(
                        "{name} point {k} has {} coordinates, expected {dim}",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(CotError::Shape(format!("{name} point {k} is not finite")));
                }
            }
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    if pts[a] == pts[b] {
                        return Err(CotError::Shape(format!(
                            "{name} points {a} and {b} coincide"
                        )));
                    }
                }
            }
        }
        Ok(SupportGrid { dim, x, y })
    }

    /// One-dimensional grid from scalar coordinates.
    pub fn line(x: &[f64], y: &[f64]) -> Result<Self> {
        SupportGrid::new(
            1,
            x.iter().map(|&v| vec![v]).collect(),
            y.iter().map(|&v| vec![v]).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self) -> &[Point] {
        &self.x
    }

    pub fn y(&self) -> &[Point] {
        &self.y
    }

    pub fn points(&self, axis: Axis) -> &[Point] {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn cells(&self) -> usize {
        self.m() * self.n()
    }

    pub fn ell_x(&self, i: usize) -> f64 {
        1.0 + norm(&self.x[i])
    }

    pub fn ell_y(&self, j: usize) -> f64 {
        1.0 + norm(&self.y[j])
    }

    /// The linear-growth weight `ℓ(x, y) = (1 + |x|) + (1 + |y|)`.
    pub fn ell(&self, i: usize, j: usize) -> f64 {
        self.ell_x(i) + self.ell_y(j)
    }

    pub fn same_axes(&self) -> bool {
        self.x == self.y
    }

    pub(crate) fn require_line(&self) -> Result<()> {
        if self.dim != 1 {
            return Err(CotError::UnsupportedDimension(self.dim));
        }
        Ok(())
    }

    /// Scalar coordinates of a one-dimensional axis.
    pub fn coords(&self, axis: Axis) -> Vec<f64> {
        self.points(axis).iter().map(|p| p[0]).collect()
    }

    /// Grid with every point shifted by `-origin`.
    pub fn recentered(&self, origin: &[f64]) -> SupportGrid {
        let shift = |pts: &[Point]| -> Vec<Point> {
            pts.iter()
                .map(|p| p.iter().zip(origin).map(|(a, o)| a - o).collect())
                .collect()
        };
        SupportGrid {
            dim: self.dim,
            x: shift(&self.x),
            y: shift(&self.y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Nonnegative weights on the points of one grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    axis: Axis,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(axis: Axis, weights: Vec<f64>) -> Result<Self> {
        if let Some(k) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(CotError::Shape(format!(
                "weight {k} is {} (weights must be finite and nonnegative)",
                weights[k]
            )));
        }
        Ok(DiscreteMeasure { axis, weights })
    }

    /// Point mass at index `k` of an axis with `len` points.
    pub fn dirac(axis: Axis, len: usize, k: usize) -> Self {
        let mut w = vec![0.0; len];
        w[k] = 1.0;
        DiscreteMeasure { axis, weights: w }
    }

    pub fn uniform(axis: Axis, len: usize) -> Self {
        DiscreteMeasure {
            axis,
            weights: vec![1.0 / len as f64; len],
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, _)| k)
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= MASS_TOL
    }

    pub(crate) fn require_probability(&self, what: &'static str) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(CotError::NotNormalized {
                what,
                mass: self.mass(),
            })
        }
    }

    pub(crate) fn require_on(&self, grid: &SupportGrid, axis: Axis) -> Result<()> {
        let len = grid.points(axis).len();
        if self.axis != axis || self.weights.len() != len {
            return Err(CotError::Shape(format!(
                "measure on {:?} with {} weights does not match axis {:?} with {} points",
                self.axis,
                self.weights.len(),
                axis,
                len
            )));
        }
        Ok(())
    }

    /// `Σ wᵢ tᵢ / Σ wᵢ`.
    pub fn barycenter(&self, grid: &SupportGrid) -> Vec<f64> {
        let pts = grid.points(self.axis);
        let mass = self.mass();
        let mut c = vec![0.0; grid.dim()];
        for (w, p) in self.weights.iter().zip(pts) {
            for (ck, pk) in c.iter_mut().zip(p) {
                *ck += w * pk;
            }
        }
        if mass > 0.0 {
            for ck in &mut c {
                *ck /= mass;
            }
        }
        c
    }

    /// `Σ wᵢ (1 + |tᵢ|)`.
    pub fn weighted_mass(&self, grid: &SupportGrid) -> f64 {
        self.weights
            .iter()
            .zip(grid.points(self.axis))
            .map(|(w, p)| w * (1.0 + norm(p)))
            .sum()
    }

    /// `Σ wᵢ φ(tᵢ)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Nonnegative mass on the cells of `X × Y`, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    m: usize,
    n: usize,
    mass: Vec<f64>,
}

impl Coupling {
    pub fn zeros(m: usize, n: usize) -> Self {
        Coupling {
            m,
            n,
            mass: vec![0.0; m * n],
        }
    }

    pub fn from_dense(m: usize, n: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != m * n {
            return Err(CotError::Shape(format!(
                "{} entries for a {m}x{n} coupling",
                mass.len()
            )));
        }
        if let Some(k) = mass.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(CotError::Shape(format!(
                "coupling entry ({}, {}) is {}",
                k / n,
                k % n,
                mass[k]
            )));
        }
        Ok(Coupling { m, n, mass })
    }

    /// Builds a coupling from `(i, j, weight)` triples; repeated cells add up.
    pub fn from_triples(m: usize, n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut mass = vec![0.0; m * n];
        for &(i, j, w) in triples {
            if i >= m || j >= n {
                return Err(CotError::Shape(format!("cell ({i}, {j}) outside {m}x{n}")));
            }
            mass[i * n + j] += w;
        }
        Coupling::from_dense(m, n, mass)
    }

    /// Product measure `α × β`.
    pub fn product(alpha: &[f64], beta: &[f64]) -> Self {
        let mut mass = Vec::with_capacity(alpha.len() * beta.len());
        for a in alpha {
            for b in beta {
                mass.push(a * b);
            }
        }
        Coupling {
            m: alpha.len(),
            n: beta.len(),
            mass,
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.n + j]
    }

    pub fn dense(&self) -> &[f64] {
        &self.mass
    }

    /// Nonzero cells as `(i, j, weight)`.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, &w)| (k / self.n, k % self.n, w))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.mass.chunks(self.n).map(|row| row.iter().sum()).collect()
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.mass.chunks(self.n) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        out
    }

    /// Per `xᵢ` and coordinate `r`: `Σⱼ η_ij (y_j^(r) − x_i^(r))`.
    pub fn martingale_defect(&self, grid: &SupportGrid) -> Vec<Vec<f64>> {
        let d = grid.dim();
        (0..self.m)
            .map(|i| {
                let xi = &grid.x()[i];
                let mut v = vec![0.0; d];
                for j in 0..self.n {
                    let w = self.get(i, j);
                    if w != 0.0 {
                        for (vr, (yr, xr)) in v.iter_mut().zip(grid.y()[j].iter().zip(xi)) {
                            *vr += w * (yr - xr);
                        }
                    }
                }
                v
            })
            .collect()
    }

    /// Whether every row's defect is within `tol × row mass` (plus a
    /// round-off floor).
    pub fn is_martingale(&self, grid: &SupportGrid, tol: f64) -> bool {
        let rows = self.x_marginal();
        self.martingale_defect(grid)
            .iter()
            .zip(rows)
            .all(|(d, mass)| norm(d) <= tol * mass + 1e-15)
    }

    /// Pairing `Σ η_ij f_ij` with a dense table over the same cells.
    pub fn pair(&self, values: &[f64]) -> f64 {
        self.mass.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn scaled(&self, t: f64) -> Coupling {
        Coupling {
            m: self.m,
            n: self.n,
            mass: self.mass.iter().map(|w| w * t).collect(),
        }
    }
}

/// `u_μ(x) = Σᵢ wᵢ |x − tᵢ|` for a one-dimensional measure.
pub fn potential(grid: &SupportGrid, m: &DiscreteMeasure, x: f64) -> Result<f64> {
    grid.require_line()?;
    m.require_on(grid, m.axis())?;
    Ok(potential_at(&grid.coords(m.axis()), m.weights(), x))
}

pub(crate) fn potential_at(points: &[f64], weights: &[f64], x: f64) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (x - t).abs())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialOrder {
    pub ordered: bool,
    /// Difference of barycenters `bary(ν) − bary(μ)`.
    pub barycenter_gap: f64,
    /// Point where `u_μ − u_ν` is largest, when that exceeds the tolerance.
    pub violation_point: Option<f64>,
    pub max_violation: f64,
}

/// One-dimensional convex order via barycenters and potential dominance.
///
/// `u_μ − u_ν` is piecewise linear with kinks only at atoms, so dominance is
/// checked at the union of both supports plus both barycenters.
pub fn check_convex_order_potential(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<PotentialOrder> {
    grid.require_line()?;
    mu.require_on(grid, Axis::X)?;
    nu.require_on(grid, Axis::Y)?;
    mu.require_probability("mu")?;
    nu.require_probability("nu")?;

    let xs = grid.coords(Axis::X);
    let ys = grid.coords(Axis::Y);
    let bx = mu.barycenter(grid)[0];
    let by = nu.barycenter(grid)[0];
    let barycenter_gap = by - bx;

    let mut candidates: Vec<f64> = mu
        .support()
        .map(|i| xs[i])
        .chain(nu.support().map(|j| ys[j]))
        .chain([bx, by])
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let lo = candidates.first().copied().unwrap_or(0.0);
    let hi = candidates.last().copied().unwrap_or(0.0);
    let tol = POTENTIAL_TOL * mu.mass().max(nu.mass()) * (1.0 + (hi - lo));

    let mut worst: Option<(f64, f64)> = None;
    for &t in &candidates {
        let diff = potential_at(&xs, mu.weights(), t) - potential_at(&ys, nu.weights(), t);
        if worst.is_none_or(|(_, w)| diff > w) {
            worst = Some((t, diff));
        }
    }
    let (point, max_violation) = worst.unwrap_or((0.0, 0.0));
    let dominated = max_violation <= tol;
    let means_equal = barycenter_gap.abs() <= BARYCENTER_TOL;
    Ok(PotentialOrder {
        ordered: dominated && means_equal,
        barycenter_gap,
        violation_point: (!dominated).then_some(point),
        max_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpOrder {
    pub ordered: bool,
    pub coupling: Option<Coupling>,
    /// Farkas multipliers of the martingale-coupling rows (row sums, column
    /// sums, then one row per `(xᵢ, coordinate)`), when infeasible.
    pub farkas: Option<Vec<f64>>,
}

/// Rows and variables of the martingale-coupling feasibility program.
pub(crate) fn martingale_coupling_lp(
    grid: &SupportGrid,
    mu: &[f64],
    nu: &[f64],
    sense: Sense,
) -> LinearProgram {
    let (m, n, d) = (grid.m(), grid.n(), grid.dim());
    let mut lp = LinearProgram::new(sense, m * n);
    for (i, &w) in mu.iter().enumerate() {
        lp.add_row((0..n).map(|j| (i * n + j, 1.0)), Relation::Eq, w);
    }
    for (j, &w) in nu.iter().enumerate() {
        lp.add_row((0..m).map(|i| (i * n + j, 1.0)), Relation::Eq, w);
    }
    for i in 0..m {
        for r in 0..d {
            let xi = grid.x()[i][r];
            lp.add_row(
                (0..n).map(|j| (i * n + j, grid.y()[j][r] - xi)),
                Relation::Eq,
                0.0,
            );
        }
    }
    lp
}

/// Convex order in any dimension: feasibility of the martingale-coupling
/// program with marginals `μ`, `ν`.
pub fn check_convex_order_lp(
    grid: &SupportGrid,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<LpOrder> {
    mu.require_on(grid, Axis::X)?;
    nu.require_on(grid, Axis::Y)?;
    mu.require_probability("mu")?;
    nu.require_probability("nu")?;
    let lp = martingale_coupling_lp(grid, mu.weights(), nu.weights(), Sense::Maximize);
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => {
            let mass = sol.x.iter().map(|v| v.max(0.0)).collect();
            Ok(LpOrder {
                ordered: true,
                coupling: Some(Coupling::from_dense(grid.m(), grid.n(), mass)?),
                farkas: None,
            })
        }
        Status::Infeasible => {
            let farkas = match sol.certificate {
                Certificate::Farkas(y) => Some(y),
                _ => None,
            };
            Ok(LpOrder {
                ordered: false,
                coupling: None,
                farkas,
            })
        }
        Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
    }
}

/// Splits a martingale coupling along a decomposition `α + β = η_x` of its
/// first marginal, using the densities `z^α = α / (α + β)`.
pub fn split_coupling(
    grid: &SupportGrid,
    eta: &Coupling,
    alpha: &[f64],
    beta: &[f64],
) -> Result<(Coupling, Coupling)> {
    let (m, n) = (eta.rows(), eta.cols());
    if alpha.len() != m || beta.len() != m || grid.m() != m || grid.n() != n {
        return Err(CotError::Shape("split weights do not match the coupling".into()));
    }
    if alpha.iter().chain(beta).any(|w| !w.is_finite() || *w < 0.0) {
        return Err(CotError::Precondition("split weights must be nonnegative".into()));
    }
    let rows = eta.x_marginal();
    let scale = 1.0 + eta.total_mass();
    for i in 0..m {
        if (alpha[i] + beta[i] - rows[i]).abs() > 1e-9 * scale {
            return Err(CotError::Precondition(format!(
                "alpha + beta differs from the first marginal at row {i}: {} vs {}",
                alpha[i] + beta[i],
                rows[i]
            )));
        }
    }
    if !eta.is_martingale(grid, 1e-9) {
        return Err(CotError::Precondition("coupling is not a martingale".into()));
    }
    let mut a = vec![0.0; m * n];
    let mut b = vec![0.0; m * n];
    for i in 0..m {
        let total = alpha[i] + beta[i];
        let z = if total > 0.0 { alpha[i] / total } else { 0.0 };
        for j in 0..n {
            let w = eta.get(i, j);
            a[i * n + j] = z * w;
            b[i * n + j] = w - z * w;
        }
    }
    Ok((Coupling::from_dense(m, n, a)?, Coupling::from_dense(m, n, b)?))
}
