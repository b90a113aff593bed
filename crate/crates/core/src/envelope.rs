//! Convexity tested against martingale spreads, and convex envelopes as
//! cheapest martingale transports of a measure.

use cot_lab_lp::{solve, Certificate, LinearProgram, Relation, Sense, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::measures::{norm, Point, SupportGrid};

/// Tolerance for `φ(x) ≤ Σ pⱼ φ(yⱼ)`.
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Values of a function on a finite point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    points: Vec<Point>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() || points.is_empty() {
            return Err(CotError::Shape(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CotError::Shape("function values must be finite".into()));
        }
        // validates dimensions and distinctness
        SupportGrid::new(points[0].len(), points.clone(), points.clone())?;
        Ok(GridFunction { points, values })
    }

    pub fn line(x: &[f64], values: Vec<f64>) -> Result<Self> {
        GridFunction::new(x.iter().map(|&t| vec![t]).collect(), values)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// `max |φ(x)| / (1 + |x|)`.
    pub fn ell_norm(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.values)
            .fold(0.0f64, |a, (p, v)| a.max(v.abs() / (1.0 + norm(p))))
    }
}

/// A probability `p` on the function's points with barycenter `points[at]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub at: usize,
    pub weights: Vec<f64>,
    /// `φ(x) − Σ pⱼ φ(yⱼ)`.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub convex: bool,
    /// The worst violating spread, if any.
    pub violation: Option<Spread>,
    /// Points with no spread (outside the hull of the others).
    pub skipped: Vec<usize>,
}

/// Cheapest spread around `target`: `min Σ pⱼ φⱼ` with `Σ p = 1`,
/// `Σ pⱼ yⱼ = target`. `Ok(None)` when no spread exists.
fn cheapest_spread(phi: &GridFunction, target: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    let n = phi.points.len();
    let mut lp = LinearProgram::new(Sense::Minimize, n);
    for (j, &v) in phi.values.iter().enumerate() {
        lp.set_cost(j, v);
    }
    lp.add_row((0..n).map(|j| (j, 1.0)), Relation::Eq, 1.0);
    for (r, &t) in target.iter().enumerate() {
        lp.add_row((0..n).map(|j| (j, phi.points[j][r])), Relation::Eq, t);
    }
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => Ok(Some((sol.objective, sol.x))),
        Status::Infeasible => Ok(None),
        Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
    }
}

/// Whether `φ(x) ≤ Σ pⱼ φ(yⱼ)` for every point `x` and every spread `p`
/// with barycenter `x`.
pub fn is_convex_bidual(phi: &GridFunction) -> Result<ConvexityCheck> {
    let results: Vec<Option<(f64, Vec<f64>)>> = phi
        .points
        .par_iter()
        .map(|x| cheapest_spread(phi, x))
        .collect::<Result<_>>()?;
    let mut worst: Option<Spread> = None;
    let mut skipped = Vec::new();
    for (at, r) in results.into_iter().enumerate() {
        let Some((value, weights)) = r else {
            skipped.push(at);
            continue;
        };
        let violation = phi.values[at] - value;
        let tol = CONVEXITY_TOL * (1.0 + phi.values[at].abs());
        if violation > tol && worst.as_ref().is_none_or(|w| violation > w.violation) {
            worst = Some(Spread {
                at,
                weights: weights.iter().map(|w| w.max(0.0)).collect(),
                violation,
            });
        }
    }
    Ok(ConvexityCheck {
        convex: worst.is_none(),
        violation: worst,
        skipped,
    })
}

/// `min Σ η_ij φ(yⱼ)` over nonnegative martingale `η` with first marginal
/// `alpha` on `at`.
fn envelope_nonnegative(phi: &GridFunction, at: &[Point], alpha: &[f64]) -> Result<f64> {
    let (m, n, d) = (at.len(), phi.points.len(), phi.dim());
    let mut lp = LinearProgram::new(Sense::Minimize, m * n);
    for i in 0..m {
        for j in 0..n {
            lp.set_cost(i * n + j, phi.values[j]);
        }
    }
    for (i, &w) in alpha.iter().enumerate() {
        lp.add_row((0..n).map(|j| (i * n + j, 1.0)), Relation::Eq, w);
    }
    for i in 0..m {
        for r in 0..d {
            let xi = at[i][r];
            lp.add_row(
                (0..n).map(|j| (i * n + j, phi.points[j][r] - xi)),
                Relation::Eq,
                0.0,
            );
        }
    }
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.objective),
        Status::Infeasible => Err(CotError::Infeasible {
            what: "measure charges points outside the convex hull of the function's domain"
                .into(),
            farkas: match sol.certificate {
                Certificate::Farkas(y) => y,
                _ => Vec::new(),
            },
        }),
        Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
    }
}

/// `b^c(α)`: the cheapest `φ`-cost of the second marginal over martingale
/// transports of `α`; a signed `α` is split as `b^c(α⁺) − b^c(α⁻)`.
pub fn convex_envelope(phi: &GridFunction, at: &[Point], alpha: &[f64]) -> Result<f64> {
    if at.len() != alpha.len() {
        return Err(CotError::Shape(format!(
            "{} points but {} weights",
            at.len(),
            alpha.len()
        )));
    }
    if at.iter().any(|p| p.len() != phi.dim()) || alpha.iter().any(|w| !w.is_finite()) {
        return Err(CotError::Shape("measure does not match the function's dimension".into()));
    }
    let plus: Vec<f64> = alpha.iter().map(|w| w.max(0.0)).collect();
    let minus: Vec<f64> = alpha.iter().map(|w| (-w).max(0.0)).collect();
    let mut value = 0.0;
    if plus.iter().any(|&w| w > 0.0) {
        value += envelope_nonnegative(phi, at, &plus)?;
    }
    if minus.iter().any(|&w| w > 0.0) {
        value -= envelope_nonnegative(phi, at, &minus)?;
    }
    Ok(value)
}

/// `x ↦ b^c(δ_x)` at every point of the function's domain.
pub fn envelope_values(phi: &GridFunction) -> Result<Vec<f64>> {
    phi.points
        .par_iter()
        .map(|x| convex_envelope(phi, std::slice::from_ref(x), &[1.0]))
        .collect()
}

/// Lower convex hull of `{(xⱼ, φⱼ)}` evaluated at every `xⱼ`.
pub fn lower_hull_values(x: &[f64], values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut hull: Vec<usize> = Vec::new();
    for &k in &order {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (x[b] - x[a]) * (values[k] - values[a]) - (values[b] - values[a]) * (x[k] - x[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut out = vec![0.0; x.len()];
    let mut seg = 0;
    for &k in &order {
        while seg + 1 < hull.len() - 1 && x[hull[seg + 1]] < x[k] {
            seg += 1;
        }
        out[k] = if hull.len() == 1 {
            values[hull[0]]
        } else {
            let (a, b) = (hull[seg], hull[seg + 1]);
            let t = (x[k] - x[a]) / (x[b] - x[a]);
            values[a] + t * (values[b] - values[a])
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    /// `b^c(δ_x)` per point.
    pub envelope: Vec<f64>,
    /// The envelope passes `is_convex_bidual`.
    pub convex: bool,
    /// `b^c(δ_x) ≤ φ(x)` everywhere.
    pub dominated: bool,
    /// Largest distance to the lower convex hull.
    pub hull_error: f64,
    pub matches_hull: bool,
    /// `max |b^c(δ_x)| / (1 + |x|)`, recorded next to `phi_norm`.
    pub envelope_norm: f64,
    pub phi_norm: f64,
}

impl EnvelopeCheck {
    pub fn holds(&self) -> bool {
        self.convex && self.dominated && self.matches_hull
    }
}

/// The envelope is convex, lies below `φ`, and is the largest such function
/// (it equals the lower convex hull).
pub fn envelope_as_supremum_check(phi: &GridFunction) -> Result<EnvelopeCheck> {
    if phi.dim() != 1 {
        return Err(CotError::UnsupportedDimension(phi.dim()));
    }
    let envelope = envelope_values(phi)?;
    let env_fn = GridFunction::new(phi.points.clone(), envelope.clone())?;
    let convex = is_convex_bidual(&env_fn)?.convex;
    let dominated = envelope
        .iter()
        .zip(&phi.values)
        .all(|(e, v)| *e <= v + 1e-12 * (1.0 + v.abs()));
    let xs: Vec<f64> = phi.points.iter().map(|p| p[0]).collect();
    let hull = lower_hull_values(&xs, &phi.values);
    let hull_error = envelope
        .iter()
        .zip(&hull)
        .fold(0.0f64, |a, (e, h)| a.max((e - h).abs()));
    Ok(EnvelopeCheck {
        convex,
        dominated,
        matches_hull: hull_error <= 1e-9,
        hull_error,
        envelope_norm: env_fn.ell_norm(),
        phi_norm: phi.ell_norm(),
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> GridFunction {
        GridFunction::line(&[0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn convexity_examples() {
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let sq = GridFunction::line(&xs, xs.iter().map(|x| x * x).collect()).unwrap();
        assert!(is_convex_bidual(&sq).unwrap().convex);

        let c = is_convex_bidual(&tent()).unwrap();
        assert!(!c.convex);
        let v = c.violation.unwrap();
        assert_eq!(v.at, 1);
        assert!((v.violation - 1.0).abs() < 1e-12);
        assert!((v.weights[0] - 0.5).abs() < 1e-12 && (v.weights[2] - 0.5).abs() < 1e-12);

        let affine = GridFunction::line(&xs, xs.iter().map(|x| 3.0 * x - 1.0).collect()).unwrap();
        assert!(is_convex_bidual(&affine).unwrap().convex);
    }

    #[test]
    fn envelope_examples() {
        let xs = [-1.0, 0.0, 2.0];
        let sq = GridFunction::line(&xs, xs.iter().map(|x| x * x).collect()).unwrap();
        let v = convex_envelope(&sq, &[vec![0.0]], &[1.0]).unwrap();
        assert!(v.abs() < 1e-12);

        let t = tent();
        assert!(convex_envelope(&t, &[vec![0.5]], &[1.0]).unwrap().abs() < 1e-12);

        let both = convex_envelope(&t, &[vec![0.25], vec![0.5]], &[1.0, 1.0]).unwrap();
        let a = convex_envelope(&t, &[vec![0.25]], &[1.0]).unwrap();
        let b = convex_envelope(&t, &[vec![0.5]], &[1.0]).unwrap();
        assert!((both - a - b).abs() < 1e-12);

        let signed = convex_envelope(&t, &[vec![0.25], vec![0.5]], &[1.0, -1.0]).unwrap();
        assert!((signed - (a - b)).abs() < 1e-12);
    }

    #[test]
    fn envelope_outside_hull() {
        let err = convex_envelope(&tent(), &[vec![2.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, CotError::Infeasible { .. }));
    }

    #[test]
    fn hull_oracle() {
        let h = lower_hull_values(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.0]);
        assert_eq!(h, vec![0.0, 0.0, 0.0]);
        let h = lower_hull_values(&[2.0, 0.0, 1.0], &[4.0, 0.0, 3.0]);
        assert_eq!(h, vec![4.0, 0.0, 2.0]);
        assert_eq!(lower_hull_values(&[1.0], &[5.0]), vec![5.0]);
    }

    #[test]
    fn supremum_check() {
        let c = envelope_as_supremum_check(&tent()).unwrap();
        assert!(c.holds());
        assert_eq!(c.envelope.len(), 3);
        let xs = [0.0, 1.0, 3.0];
        let convex = GridFunction::line(&xs, vec![1.0, 0.0, 2.0]).unwrap();
        let c = envelope_as_supremum_check(&convex).unwrap();
        assert!(c.holds());
        for (e, v) in c.envelope.iter().zip(convex.values()) {
            assert!((e - v).abs() < 1e-12);
        }
    }
}
