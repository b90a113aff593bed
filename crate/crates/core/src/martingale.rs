//! The trading map `T(γ)(x, y) = γ(x) · (x − y)`, martingale defects,
//! superhedging with the linear-growth order unit, and bounded dynamic
//! hedges dominating a payoff.

use cot_lab_lp::{solve, Bounds, Certificate, LinearProgram, Relation, Sense, Status};
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::measures::{norm, Coupling, SupportGrid};
use crate::transport::PayoffTable;

/// Residual allowed when inverting `T`.
pub const RANGE_TOL: f64 = 1e-10;

/// A dynamic position `γ(xᵢ) ∈ R^d` per `X` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingStrategy {
    pub gamma: Vec<Vec<f64>>,
}

impl TradingStrategy {
    pub fn new(gamma: Vec<Vec<f64>>) -> Result<Self> {
        if gamma.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CotError::Shape("strategy entries must be finite".into()));
        }
        Ok(TradingStrategy { gamma })
    }

    pub fn constant(grid: &SupportGrid, value: &[f64]) -> Self {
        TradingStrategy {
            gamma: vec![value.to_vec(); grid.m()],
        }
    }

    /// Largest Euclidean norm of `γ(xᵢ)` over the points.
    pub fn sup_norm(&self) -> f64 {
        self.gamma.iter().fold(0.0f64, |a, g| a.max(norm(g)))
    }

    fn check(&self, grid: &SupportGrid) -> Result<()> {
        if self.gamma.len() != grid.m() || self.gamma.iter().any(|g| g.len() != grid.dim()) {
            return Err(CotError::Shape(format!(
                "strategy needs {} vectors of length {}",
                grid.m(),
                grid.dim()
            )));
        }
        Ok(())
    }
}

/// `T(γ)(xᵢ, y_j) = γ(xᵢ) · (xᵢ − y_j)`.
pub fn apply_t(grid: &SupportGrid, gamma: &TradingStrategy) -> Result<PayoffTable> {
    gamma.check(grid)?;
    let mut values = Vec::with_capacity(grid.cells());
    for (x, g) in grid.x().iter().zip(&gamma.gamma) {
        for y in grid.y() {
            values.push(g.iter().zip(x.iter().zip(y)).map(|(gr, (xr, yr))| gr * (xr - yr)).sum());
        }
    }
    PayoffTable::new(grid.m(), grid.n(), values)
}

/// Per `xᵢ`: `Σⱼ η_ij (xᵢ − y_j)`, the pairing of `η` against `T`.
pub fn martingale_defect(grid: &SupportGrid, eta: &Coupling) -> Vec<Vec<f64>> {
    eta.martingale_defect(grid)
        .into_iter()
        .map(|d| d.into_iter().map(|v| -v).collect())
        .collect()
}

/// Whether `η` annihilates every `T(γ)`: each defect within `1e-9` times
/// its row mass.
pub fn is_martingale_measure(grid: &SupportGrid, eta: &Coupling) -> bool {
    eta.is_martingale(grid, 1e-9)
}

/// The finite-grid form of `|γ(x)| ≤ (1/λ) ‖ξ‖_ℓ (2 + 2|x| + λ)`.
pub fn gamma_bound(x_norm: f64, lambda: f64, xi_ell: f64) -> f64 {
    xi_ell * (2.0 + 2.0 * x_norm + lambda) / lambda
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBoundRow {
    pub i: usize,
    /// Largest displacement `|y − xᵢ|` on the grid.
    pub lambda: f64,
    pub gamma_norm: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBoundReport {
    pub xi_ell: f64,
    /// Largest `|ξ − T(γ)|` over the grid.
    pub residual: f64,
    pub rows: Vec<GammaBoundRow>,
}

impl GammaBoundReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Solves the `d × d` system `A z = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..d {
        let piv = (col..d).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..d {
            let factor = a[r][col] / a[col][col];
            for c in col..d {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut z = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|c| a[r][c] * z[c]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    Some(z)
}

/// Inverts `T`: finds the `γ` with `T(γ) = ξ` by least squares per row and
/// evaluates the growth estimate for it.
pub fn recover_gamma(grid: &SupportGrid, xi: &PayoffTable) -> Result<(TradingStrategy, GammaBoundReport)> {
    xi.require_on(grid, "payoff")?;
    let (d, n) = (grid.dim(), grid.n());
    if n < d + 1 {
        return Err(CotError::Precondition(format!(
            "inverting T in dimension {d} needs at least {} Y points",
            d + 1
        )));
    }
    let xi_ell = xi.ell_norm(grid);
    let mut gamma = Vec::with_capacity(grid.m());
    let mut rows = Vec::with_capacity(grid.m());
    let mut worst = (0.0f64, 0usize);
    for (i, x) in grid.x().iter().enumerate() {
        let disp: Vec<Vec<f64>> = grid
            .y()
            .iter()
            .map(|y| x.iter().zip(y).map(|(a, b)| a - b).collect())
            .collect();
        let mut gram = vec![vec![0.0; d]; d];
        let mut rhs = vec![0.0; d];
        for (j, v) in disp.iter().enumerate() {
            for r in 0..d {
                rhs[r] += v[r] * xi.get(i, j);
                for c in 0..d {
                    gram[r][c] += v[r] * v[c];
                }
            }
        }
        let g = solve_small(gram, rhs).ok_or_else(|| {
            CotError::Precondition(format!("Y points do not span around X point {i}"))
        })?;
        let row_scale = 1.0 + (0..n).fold(0.0f64, |a, j| a.max(xi.get(i, j).abs()));
        for (j, v) in disp.iter().enumerate() {
            let t: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
            let r = (xi.get(i, j) - t).abs() / row_scale;
            if r > worst.0 {
                worst = (r, i);
            }
        }
        let lambda = disp.iter().map(|v| norm(v)).fold(0.0f64, f64::max);
        let gamma_norm = norm(&g);
        let bound = gamma_bound(norm(x), lambda, xi_ell);
        rows.push(GammaBoundRow {
            i,
            lambda,
            gamma_norm,
            bound,
            holds: gamma_norm <= bound * (1.0 + 1e-12) + 1e-15,
        });
        gamma.push(g);
    }
    if worst.0 > RANGE_TOL {
        return Err(CotError::Precondition(format!(
            "payoff is not in the range of T: relative residual {:e} at X point {}",
            worst.0, worst.1
        )));
    }
    Ok((
        TradingStrategy { gamma },
        GammaBoundReport {
            xi_ell,
            residual: worst.0,
            rows,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSuperhedge {
    /// `max η(a)` over nonnegative martingale `η` with `η(ℓ) = 1`.
    pub primal: f64,
    /// `min c` over `c ℓ + T(γ) ≥ a`.
    pub value: f64,
    pub gap: f64,
    pub gamma: TradingStrategy,
    pub coupling: Coupling,
    /// Largest shortfall `a − c ℓ − T(γ)`.
    pub domination: f64,
}

fn require_same_axes(grid: &SupportGrid) -> Result<()> {
    if !grid.same_axes() {
        return Err(CotError::Precondition("X and Y must coincide".into()));
    }
    Ok(())
}

/// Cheapest superhedge of `a` by cash in units of `ℓ` plus a dynamic
/// position, and the matching sup over normalized martingale measures.
pub fn superhedge_martingale(grid: &SupportGrid, a: &PayoffTable) -> Result<MartingaleSuperhedge> {
    require_same_axes(grid)?;
    a.require_on(grid, "payoff")?;
    let (m, n, d) = (grid.m(), grid.n(), grid.dim());

    let mut primal = LinearProgram::new(Sense::Maximize, m * n);
    for (c, &v) in a.values().iter().enumerate() {
        primal.set_cost(c, v);
    }
    for i in 0..m {
        for r in 0..d {
            let xi = grid.x()[i][r];
            primal.add_row(
                (0..n).map(|j| (i * n + j, grid.y()[j][r] - xi)),
                Relation::Eq,
                0.0,
            );
        }
    }
    primal.add_row(
        (0..m).flat_map(|i| (0..n).map(move |j| (i * n + j, grid.ell(i, j)))),
        Relation::Eq,
        1.0,
    );
    let p = solve(&primal)?;
    if p.status != Status::Optimal {
        return Err(CotError::UnexpectedStatus("not optimal"));
    }

    let mut dual = LinearProgram::new(Sense::Minimize, 1 + m * d);
    for v in 0..dual.num_vars() {
        dual.set_bounds(v, Bounds::FREE);
    }
    dual.set_cost(0, 1.0);
    for i in 0..m {
        for j in 0..n {
            let coeffs = std::iter::once((0, grid.ell(i, j))).chain(
                (0..d).map(|r| (1 + i * d + r, grid.x()[i][r] - grid.y()[j][r])),
            );
            dual.add_row(coeffs, Relation::Ge, a.get(i, j));
        }
    }
    let q = solve(&dual)?;
    if q.status != Status::Optimal {
        return Err(CotError::UnexpectedStatus("not optimal"));
    }
    let gamma = TradingStrategy {
        gamma: (0..m).map(|i| q.x[1 + i * d..1 + (i + 1) * d].to_vec()).collect(),
    };
    let t = apply_t(grid, &gamma)?;
    let mut domination = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            domination = domination.max(a.get(i, j) - q.x[0] * grid.ell(i, j) - t.get(i, j));
        }
    }
    let coupling = Coupling::from_dense(m, n, p.x.iter().map(|v| v.max(0.0)).collect())?;
    Ok(MartingaleSuperhedge {
        primal: p.objective,
        value: q.x[0],
        gap: (p.objective - q.x[0]).abs(),
        gamma,
        coupling,
        domination,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleDecomposition {
    pub gamma: TradingStrategy,
    /// `‖T(γ)‖_ℓ` of the minimizer.
    pub norm: f64,
    /// `‖a‖_ℓ`.
    pub payoff_norm: f64,
    /// `norm / payoff_norm` (zero for a zero payoff).
    pub ratio: f64,
    /// Whether `‖T(γ)‖_ℓ ≤ 3 ‖a‖_ℓ`.
    pub bound_holds: bool,
    /// Largest shortfall `a − T(γ)`.
    pub domination: f64,
}

/// Among dynamic positions with `T(γ) ≥ a`, one minimizing `‖T(γ)‖_ℓ`.
pub fn supermartingale_decompose(grid: &SupportGrid, a: &PayoffTable) -> Result<SupermartingaleDecomposition> {
    a.require_on(grid, "payoff")?;
    let (m, n, d) = (grid.m(), grid.n(), grid.dim());
    // variables: γ (m·d, free), s ≥ 0
    let s = m * d;
    let mut lp = LinearProgram::new(Sense::Minimize, s + 1);
    for v in 0..s {
        lp.set_bounds(v, Bounds::FREE);
    }
    lp.set_cost(s, 1.0);
    for i in 0..m {
        for j in 0..n {
            let t: Vec<(usize, f64)> = (0..d)
                .map(|r| (i * d + r, grid.x()[i][r] - grid.y()[j][r]))
                .collect();
            let ell = grid.ell(i, j);
            lp.add_row(t.iter().copied(), Relation::Ge, a.get(i, j));
            lp.add_row(t.iter().copied().chain([(s, ell)]), Relation::Ge, 0.0);
            lp.add_row(t.iter().map(|&(v, c)| (v, -c)).chain([(s, ell)]), Relation::Ge, 0.0);
        }
    }
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(CotError::Infeasible {
                what: "no dynamic position dominates the payoff".into(),
                farkas: match sol.certificate {
                    Certificate::Farkas(y) => y,
                    _ => Vec::new(),
                },
            })
        }
        Status::Unbounded => return Err(CotError::UnexpectedStatus("unbounded")),
    }
    let gamma = TradingStrategy {
        gamma: (0..m).map(|i| sol.x[i * d..(i + 1) * d].to_vec()).collect(),
    };
    let t = apply_t(grid, &gamma)?;
    let norm = t.ell_norm(grid);
    let payoff_norm = a.ell_norm(grid);
    let domination = a
        .values()
        .iter()
        .zip(t.values())
        .fold(0.0f64, |acc, (x, y)| acc.max(x - y));
    Ok(SupermartingaleDecomposition {
        gamma,
        norm,
        payoff_norm,
        ratio: if payoff_norm > 0.0 { norm / payoff_norm } else { 0.0 },
        bound_holds: norm <= 3.0 * payoff_norm + 1e-7,
        domination,
    })
}
