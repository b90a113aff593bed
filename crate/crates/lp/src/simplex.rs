//! Two-phase dense tableau simplex.
//!
//! The natural-form program is shifted and split into `min ĉᵀx, Ax = b,
//! x ≥ 0, b ≥ 0`. Every row starts with a unit basic column (its slack when
//! that has coefficient `+1`, otherwise an artificial), so the tableau columns
//! of that initial basis always hold `B⁻¹`. Duals are read off those columns
//! and both primal and dual values get one step of iterative refinement.
//!
//! Pricing is Dantzig's most negative reduced cost. After
//! [`SolverOptions::degenerate_limit`] consecutive degenerate pivots the phase
//! switches to Bland's smallest-index rule, which cannot cycle.

use std::collections::VecDeque;

use crate::error::{LpError, PivotRecord};
use crate::problem::{Certificate, LinearProgram, LpSolution, Relation, Status};
use crate::verify::optimality_residuals;

const TRACE_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot_tol: f64,
    pub degenerate_limit: usize,
    /// `None` scales the cap with the program size.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-10,
            degenerate_limit: 50,
            max_iterations: None,
        }
    }
}

/// Solves `lp` with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut tab = Tableau::build(lp);
    tab.run(lp, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColKind {
    /// Column of natural variable `var`, entering with sign `sign`.
    Structural { var: usize, sign: f64 },
    Slack,
    Artificial,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major, `cols + 1` entries per row; the last is the right-hand side.
    t: Vec<f64>,
    /// Phase-one and phase-two reduced-cost rows (last entry is `−objective`).
    d1: Vec<f64>,
    d2: Vec<f64>,
    cost: Vec<f64>,
    kind: Vec<ColKind>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    init_col: Vec<usize>,
    /// Sign applied to each standard row so that its rhs is nonnegative.
    flip: Vec<f64>,
    /// Original standard-form columns, kept for refinement.
    a_cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    natural_rows: usize,
    offset: Vec<f64>,
    iterations: usize,
    trace: VecDeque<PivotRecord>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let sigma = lp.sense.sign();
        let nvars = lp.num_vars();

        // Variable substitution x = offset + Σ sign · x_col.
        let mut kind = Vec::new();
        let mut var_cols: Vec<Vec<usize>> = vec![Vec::new(); nvars];
        let mut offset = vec![0.0; nvars];
        // (column, range) rows for doubly bounded variables.
        let mut range_rows: Vec<(usize, f64)> = Vec::new();
        for (j, b) in lp.bounds.iter().enumerate() {
            let lo = b.lower.is_finite();
            let hi = b.upper.is_finite();
            if lo {
                offset[j] = b.lower;
                var_cols[j].push(kind.len());
                kind.push(ColKind::Structural { var: j, sign: 1.0 });
                if hi {
                    range_rows.push((kind.len() - 1, b.upper - b.lower));
                }
            } else if hi {
                offset[j] = b.upper;
                var_cols[j].push(kind.len());
                kind.push(ColKind::Structural { var: j, sign: -1.0 });
            } else {
                var_cols[j].push(kind.len());
                kind.push(ColKind::Structural { var: j, sign: 1.0 });
                var_cols[j].push(kind.len());
                kind.push(ColKind::Structural { var: j, sign: -1.0 });
            }
        }

        struct StdRow {
            entries: Vec<(usize, f64)>,
            relation: Relation,
            rhs: f64,
        }
        let mut std_rows: Vec<StdRow> = Vec::with_capacity(lp.num_rows() + range_rows.len());
        for row in &lp.rows {
            let mut entries = Vec::with_capacity(row.coeffs.len());
            let mut rhs = row.rhs;
            for &(j, a) in &row.coeffs {
                rhs -= a * offset[j];
                for &c in &var_cols[j] {
                    if let ColKind::Structural { sign, .. } = kind[c] {
                        entries.push((c, a * sign));
                    }
                }
            }
            std_rows.push(StdRow {
                entries,
                relation: row.relation,
                rhs,
            });
        }
        for &(c, range) in &range_rows {
            std_rows.push(StdRow {
                entries: vec![(c, 1.0)],
                relation: Relation::Le,
                rhs: range,
            });
        }

        let rows = std_rows.len();
        // Slack columns, then artificials.
        let mut slack_of_row: Vec<Option<(usize, f64)>> = vec![None; rows];
        for (i, r) in std_rows.iter().enumerate() {
            let s = match r.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            slack_of_row[i] = Some((kind.len(), s));
            kind.push(ColKind::Slack);
        }
        let mut flip = vec![1.0; rows];
        let mut init_col = vec![usize::MAX; rows];
        for (i, r) in std_rows.iter().enumerate() {
            if r.rhs < 0.0 {
                flip[i] = -1.0;
            }
            match slack_of_row[i] {
                Some((c, s)) if s * flip[i] > 0.0 => init_col[i] = c,
                _ => {
                    init_col[i] = kind.len();
                    kind.push(ColKind::Artificial);
                }
            }
        }

        let cols = kind.len();
        let width = cols + 1;
        let mut t = vec![0.0; rows * width];
        let mut a_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
        let mut b = vec![0.0; rows];
        for (i, r) in std_rows.iter().enumerate() {
            let f = flip[i];
            let base = i * width;
            for &(c, a) in &r.entries {
                t[base + c] += f * a;
            }
            if let Some((c, s)) = slack_of_row[i] {
                t[base + c] = f * s;
            }
            if kind[init_col[i]] == ColKind::Artificial {
                t[base + init_col[i]] = 1.0;
            }
            t[base + cols] = f * r.rhs;
            b[i] = f * r.rhs;
            for c in 0..cols {
                let v = t[base + c];
                if v != 0.0 {
                    a_cols[c].push((i, v));
                }
            }
        }

        let mut cost = vec![0.0; cols];
        for (c, k) in kind.iter().enumerate() {
            if let ColKind::Structural { var, sign } = *k {
                cost[c] = sigma * lp.objective[var] * sign;
            }
        }

        let mut d1 = vec![0.0; width];
        let mut d2 = vec![0.0; width];
        d2[..cols].copy_from_slice(&cost);
        for c in 0..cols {
            if kind[c] == ColKind::Artificial {
                d1[c] = 1.0;
            }
        }
        for i in 0..rows {
            if kind[init_col[i]] == ColKind::Artificial {
                let base = i * width;
                for c in 0..width {
                    d1[c] -= t[base + c];
                }
            }
        }

        let mut is_basic = vec![false; cols];
        for &c in &init_col {
            is_basic[c] = true;
        }

        Tableau {
            rows,
            cols,
            t,
            d1,
            d2,
            cost,
            kind,
            basis: init_col.clone(),
            is_basic,
            init_col,
            flip,
            a_cols,
            b,
            natural_rows: lp.num_rows(),
            offset,
            iterations: 0,
            trace: VecDeque::with_capacity(TRACE_LEN),
        }
    }

    #[inline]
    fn width(&self) -> usize {
        self.cols + 1
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width();
        let base = r * w;
        let piv = self.t[base + q];
        let inv = 1.0 / piv;
        let mut nz = Vec::new();
        for c in 0..w {
            let v = self.t[base + c];
            if v != 0.0 {
                self.t[base + c] = v * inv;
                nz.push(c);
            }
        }
        self.t[base + q] = 1.0;
        let pivot_row: Vec<(usize, f64)> = nz.iter().map(|&c| (c, self.t[base + c])).collect();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let bi = i * w;
            let f = self.t[bi + q];
            if f == 0.0 {
                continue;
            }
            for &(c, v) in &pivot_row {
                self.t[bi + c] -= f * v;
            }
            self.t[bi + q] = 0.0;
        }
        for d in [&mut self.d1, &mut self.d2] {
            let f = d[q];
            if f != 0.0 {
                for &(c, v) in &pivot_row {
                    d[c] -= f * v;
                }
                d[q] = 0.0;
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }

    fn record(&mut self, rec: PivotRecord) {
        if self.trace.len() == TRACE_LEN {
            self.trace.pop_front();
        }
        self.trace.push_back(rec);
    }

    fn failure(&self, reason: impl Into<String>) -> LpError {
        LpError::SolverFailure {
            reason: reason.into(),
            iterations: self.iterations,
            trace: self.trace.iter().cloned().collect(),
        }
    }

    /// Runs one phase to optimality. Returns `Some(column)` when the phase
    /// objective is unbounded along that entering column.
    fn optimize(&mut self, phase: u8, opts: &SolverOptions, cap: usize) -> Result<Option<usize>, LpError> {
        let w = self.width();
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= cap {
                return Err(self.failure(format!("iteration cap {cap} reached in phase {phase}")));
            }
            let d = if phase == 1 { &self.d1 } else { &self.d2 };
            let mut entering = None;
            let mut best = -opts.optimality_tol;
            for c in 0..self.cols {
                if self.is_basic[c] || self.kind[c] == ColKind::Artificial {
                    continue;
                }
                let dc = d[c];
                if bland {
                    if dc < -opts.optimality_tol {
                        entering = Some(c);
                        break;
                    }
                } else if dc < best {
                    best = dc;
                    entering = Some(c);
                }
            }
            let Some(q) = entering else {
                return Ok(None);
            };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.t[r * w + q];
                if a <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.t[r * w + self.cols].max(0.0) / a;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        let better = if tie {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > self.t[lr * w + q]
                            }
                        } else {
                            ratio < lratio
                        };
                        if better {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
            let Some((r, step)) = leave else {
                return Ok(Some(q));
            };

            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= opts.degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q);
            self.iterations += 1;
            let objective = if phase == 1 { -self.d1[self.cols] } else { -self.d2[self.cols] };
            self.record(PivotRecord {
                phase,
                iteration: self.iterations,
                entering: q,
                leaving_row: r,
                step,
                objective,
                bland,
            });
        }
    }

    fn run(&mut self, lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
        let cap = opts
            .max_iterations
            .unwrap_or_else(|| 50_000usize.max(50 * (self.rows + self.cols)));
        let sigma = lp.sense.sign();
        let bscale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let has_artificial = self.kind.contains(&ColKind::Artificial);
        if has_artificial {
            if self.optimize(1, opts, cap)?.is_some() {
                return Err(self.failure("phase one reported an unbounded direction"));
            }
            let infeasibility = -self.d1[self.cols];
            if infeasibility > opts.feasibility_tol * bscale {
                return Ok(self.infeasible(lp));
            }
            self.drive_out_artificials(opts);
        }

        if let Some(q) = self.optimize(2, opts, cap)? {
            return Ok(self.unbounded(lp, q));
        }

        let (xs, ys) = self.refined_point();
        let mut x = self.offset.clone();
        for (c, k) in self.kind.iter().enumerate() {
            if let ColKind::Structural { var, sign } = *k {
                x[var] += sign * xs[c];
            }
        }
        let y: Vec<f64> = (0..self.natural_rows)
            .map(|i| sigma * self.flip[i] * ys[i])
            .collect();

        let (residuals, dual_objective, _) = optimality_residuals(lp, &x, &y);
        let objective = lp.objective_value(&x);
        Ok(LpSolution {
            status: Status::Optimal,
            x,
            y,
            objective,
            dual_objective,
            residuals,
            certificate: Certificate::None,
            iterations: self.iterations,
        })
    }

    fn drive_out_artificials(&mut self, opts: &SolverOptions) {
        let w = self.width();
        for r in 0..self.rows {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for c in 0..self.cols {
                if self.is_basic[c] || self.kind[c] == ColKind::Artificial {
                    continue;
                }
                let a = self.t[r * w + c].abs();
                if a > opts.pivot_tol.max(1e-9) && best.is_none_or(|(_, b)| a > b) {
                    best = Some((c, a));
                }
            }
            if let Some((c, _)) = best {
                self.pivot(r, c);
                self.iterations += 1;
            }
            // otherwise the row is redundant and its artificial stays at zero
        }
    }

    /// Basic solution and duals of the current basis, each refined once
    /// against the original standard-form data.
    fn refined_point(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.width();
        let mut xs = vec![0.0; self.cols];
        for r in 0..self.rows {
            xs[self.basis[r]] = self.at(r, self.cols);
        }
        let mut ys: Vec<f64> = (0..self.rows)
            .map(|i| self.cost[self.init_col[i]] - self.d2[self.init_col[i]])
            .collect();

        // primal: x_B += B⁻¹ (b − A x)
        let mut resid = self.b.clone();
        for (c, col) in self.a_cols.iter().enumerate() {
            let v = xs[c];
            if v != 0.0 {
                for &(i, a) in col {
                    resid[i] -= a * v;
                }
            }
        }
        let mut dx = vec![0.0; self.rows];
        for (i, &ri) in resid.iter().enumerate() {
            if ri != 0.0 {
                let ic = self.init_col[i];
                for (k, dk) in dx.iter_mut().enumerate() {
                    *dk += self.t[k * w + ic] * ri;
                }
            }
        }
        for k in 0..self.rows {
            xs[self.basis[k]] += dx[k];
        }
        for k in 0..self.rows {
            if self.kind[self.basis[k]] != ColKind::Artificial && xs[self.basis[k]] < 0.0 {
                xs[self.basis[k]] = 0.0;
            }
        }

        // dual: y += B⁻ᵀ (c_B − Bᵀ y)
        let mut rb = vec![0.0; self.rows];
        for k in 0..self.rows {
            let c = self.basis[k];
            let mut v = self.cost[c];
            for &(i, a) in &self.a_cols[c] {
                v -= a * ys[i];
            }
            rb[k] = v;
        }
        let mut dy = vec![0.0; self.rows];
        for (k, &rk) in rb.iter().enumerate() {
            if rk != 0.0 {
                for (i, dyi) in dy.iter_mut().enumerate() {
                    *dyi += self.t[k * w + self.init_col[i]] * rk;
                }
            }
        }
        for (y, d) in ys.iter_mut().zip(dy) {
            *y += d;
        }
        (xs, ys)
    }

    fn infeasible(&self, lp: &LinearProgram) -> LpSolution {
        // Phase-one duals: y = c₁ − d₁ on the initial basis columns.
        let ys: Vec<f64> = (0..self.rows)
            .map(|i| {
                let c = self.init_col[i];
                let c1 = if self.kind[c] == ColKind::Artificial { 1.0 } else { 0.0 };
                c1 - self.d1[c]
            })
            .collect();
        let mut y: Vec<f64> = (0..self.natural_rows).map(|i| self.flip[i] * ys[i]).collect();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            for v in &mut y {
                *v /= scale;
                if v.abs() < 1e-13 {
                    *v = 0.0;
                }
            }
        }
        LpSolution {
            status: Status::Infeasible,
            x: vec![f64::NAN; lp.num_vars()],
            y: vec![f64::NAN; lp.num_rows()],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            residuals: Default::default(),
            certificate: Certificate::Farkas(y),
            iterations: self.iterations,
        }
    }

    fn unbounded(&self, lp: &LinearProgram, q: usize) -> LpSolution {
        let mut ds = vec![0.0; self.cols];
        ds[q] = 1.0;
        for r in 0..self.rows {
            ds[self.basis[r]] -= self.at(r, q);
        }
        let mut d = vec![0.0; lp.num_vars()];
        for (c, k) in self.kind.iter().enumerate() {
            if let ColKind::Structural { var, sign } = *k {
                d[var] += sign * ds[c];
            }
        }
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            for v in &mut d {
                *v /= scale;
                if v.abs() < 1e-13 {
                    *v = 0.0;
                }
            }
        }
        LpSolution {
            status: Status::Unbounded,
            x: vec![f64::NAN; lp.num_vars()],
            y: vec![f64::NAN; lp.num_rows()],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            residuals: Default::default(),
            certificate: Certificate::Ray(d),
            iterations: self.iterations,
        }
    }
}
