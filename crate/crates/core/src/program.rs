//! Primal and dual linear programs shared by the transport solvers.
//!
//! Primal: maximize `η(f)` over nonnegative `η` with marginals `μ`, `ν`,
//! optionally zero martingale defect and `η(f_k) = 0` for moment tables.
//!
//! Dual: minimize `c` over `c + h ⊕ g + T(γ) + Σ a_k f_k ≥ f` with
//! `μ(h) = ν(g) = 0`, where `T(γ)(x, y) = γ(x) · (x − y)`.

use cot_lab_lp::{solve, Bounds, LinearProgram, LpSolution, Relation, Sense, Status};

use crate::error::{CotError, Result};
use crate::measures::{Coupling, SupportGrid};
use crate::transport::{Hedge, PayoffTable};

pub(crate) struct Program<'a> {
    pub grid: &'a SupportGrid,
    pub mu: &'a [f64],
    pub nu: &'a [f64],
    pub martingale: bool,
    pub moments: &'a [PayoffTable],
    /// Cells carrying a primal variable and a dual domination row; all when
    /// `None`.
    pub active: Option<&'a [bool]>,
}

pub(crate) struct DualLayout {
    cash: usize,
    h: usize,
    g: usize,
    gamma: usize,
    a: usize,
}

impl<'a> Program<'a> {
    pub fn new(grid: &'a SupportGrid, mu: &'a [f64], nu: &'a [f64]) -> Self {
        Program {
            grid,
            mu,
            nu,
            martingale: false,
            moments: &[],
            active: None,
        }
    }

    pub fn martingale(mut self, on: bool) -> Self {
        self.martingale = on;
        self
    }

    pub fn moments(mut self, moments: &'a [PayoffTable]) -> Self {
        self.moments = moments;
        self
    }

    pub fn active(mut self, active: Option<&'a [bool]>) -> Self {
        self.active = active;
        self
    }

    pub fn cells(&self) -> Vec<usize> {
        let all = 0..self.grid.cells();
        match self.active {
            Some(mask) => all.filter(|&c| mask[c]).collect(),
            None => all.collect(),
        }
    }

    /// Primal program with the given per-cell objective. Variable `v`
    /// corresponds to cell `cells[v]`.
    pub fn primal(&self, objective: &[f64], sense: Sense) -> (LinearProgram, Vec<usize>) {
        let (m, n, d) = (self.grid.m(), self.grid.n(), self.grid.dim());
        let cells = self.cells();
        let mut lp = LinearProgram::new(sense, cells.len());
        for (v, &c) in cells.iter().enumerate() {
            lp.set_cost(v, objective[c]);
        }
        let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, &c) in cells.iter().enumerate() {
            by_row[c / n].push(v);
            by_col[c % n].push(v);
        }
        for i in 0..m {
            lp.add_row(by_row[i].iter().map(|&v| (v, 1.0)), Relation::Eq, self.mu[i]);
        }
        for j in 0..n {
            lp.add_row(by_col[j].iter().map(|&v| (v, 1.0)), Relation::Eq, self.nu[j]);
        }
        if self.martingale {
            for i in 0..m {
                for r in 0..d {
                    let xi = self.grid.x()[i][r];
                    lp.add_row(
                        by_row[i]
                            .iter()
                            .map(|&v| (v, self.grid.y()[cells[v] % n][r] - xi)),
                        Relation::Eq,
                        0.0,
                    );
                }
            }
        }
        for f in self.moments {
            lp.add_row(
                cells.iter().enumerate().map(|(v, &c)| (v, f.values()[c])),
                Relation::Eq,
                0.0,
            );
        }
        (lp, cells)
    }

    pub fn coupling(&self, cells: &[usize], x: &[f64]) -> Coupling {
        let mut dense = vec![0.0; self.grid.cells()];
        for (&cell, &v) in cells.iter().zip(x) {
            dense[cell] = v.max(0.0);
        }
        Coupling::from_dense(self.grid.m(), self.grid.n(), dense)
            .expect("clamped entries are finite and nonnegative")
    }

    /// Solves the primal for `f`, failing on anything but an optimum.
    pub fn solve_primal(&self, f: &[f64]) -> Result<(LpSolution, Coupling)> {
        let (lp, cells) = self.primal(f, Sense::Maximize);
        let sol = solve(&lp)?;
        match sol.status {
            Status::Optimal => {
                let coupling = self.coupling(&cells, &sol.x);
                Ok((sol, coupling))
            }
            Status::Infeasible => Err(CotError::UnexpectedStatus("infeasible")),
            Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
        }
    }

    /// Dual program: variables cash, h, g, γ (when martingale), a.
    pub fn dual(&self, f: &[f64]) -> (LinearProgram, DualLayout) {
        let (m, n, d) = (self.grid.m(), self.grid.n(), self.grid.dim());
        let k = self.moments.len();
        let n_gamma = if self.martingale { m * d } else { 0 };
        let layout = DualLayout {
            cash: 0,
            h: 1,
            g: 1 + m,
            gamma: 1 + m + n,
            a: 1 + m + n + n_gamma,
        };
        let mut lp = LinearProgram::new(Sense::Minimize, layout.a + k);
        for v in 0..lp.num_vars() {
            lp.set_bounds(v, Bounds::FREE);
        }
        lp.set_cost(layout.cash, 1.0);
        for c in self.cells() {
            let (i, j) = (c / n, c % n);
            let mut coeffs = vec![(layout.cash, 1.0), (layout.h + i, 1.0), (layout.g + j, 1.0)];
            if self.martingale {
                for r in 0..d {
                    coeffs.push((
                        layout.gamma + i * d + r,
                        self.grid.x()[i][r] - self.grid.y()[j][r],
                    ));
                }
            }
            for (q, t) in self.moments.iter().enumerate() {
                coeffs.push((layout.a + q, t.values()[c]));
            }
            lp.add_row(coeffs, Relation::Ge, f[c]);
        }
        lp.add_row(
            self.mu.iter().enumerate().map(|(i, &w)| (layout.h + i, w)),
            Relation::Eq,
            0.0,
        );
        lp.add_row(
            self.nu.iter().enumerate().map(|(j, &w)| (layout.g + j, w)),
            Relation::Eq,
            0.0,
        );
        (lp, layout)
    }

    pub fn hedge(&self, layout: &DualLayout, x: &[f64]) -> Hedge {
        let (m, n, d) = (self.grid.m(), self.grid.n(), self.grid.dim());
        let gamma = (0..m)
            .map(|i| {
                if self.martingale {
                    x[layout.gamma + i * d..layout.gamma + (i + 1) * d].to_vec()
                } else {
                    vec![0.0; d]
                }
            })
            .collect();
        Hedge {
            cash: x[layout.cash],
            h: x[layout.h..layout.h + m].to_vec(),
            g: x[layout.g..layout.g + n].to_vec(),
            gamma,
            moments: x[layout.a..layout.a + self.moments.len()].to_vec(),
            zeta: Vec::new(),
        }
    }

    pub fn solve_dual(&self, f: &[f64]) -> Result<(LpSolution, Hedge, LinearProgram, DualLayout)> {
        let (lp, layout) = self.dual(f);
        let sol = solve(&lp)?;
        match sol.status {
            Status::Optimal => {
                let hedge = self.hedge(&layout, &sol.x);
                Ok((sol, hedge, lp, layout))
            }
            Status::Infeasible => Err(CotError::UnexpectedStatus("infeasible")),
            Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
        }
    }

    /// Among dual optimizers with cash at most `cash`, one minimizing
    /// `Σ |a_k|`.
    pub fn min_norm_dual(
        &self,
        mut lp: LinearProgram,
        layout: &DualLayout,
        cash: f64,
    ) -> Result<Hedge> {
        let k = self.moments.len();
        if k == 0 {
            return Ok(self.hedge(layout, &lp_solve_optimal(&lp)?));
        }
        lp.set_cost(layout.cash, 0.0);
        lp.add_row(
            [(layout.cash, 1.0)],
            Relation::Le,
            cash + 1e-10 * (1.0 + cash.abs()),
        );
        for q in 0..k {
            let t = lp.add_var(1.0, Bounds::NONNEGATIVE);
            lp.add_row([(t, 1.0), (layout.a + q, -1.0)], Relation::Ge, 0.0);
            lp.add_row([(t, 1.0), (layout.a + q, 1.0)], Relation::Ge, 0.0);
        }
        let x = lp_solve_optimal(&lp)?;
        Ok(self.hedge(layout, &x))
    }
}

fn lp_solve_optimal(lp: &LinearProgram) -> Result<Vec<f64>> {
    let sol = solve(lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.x),
        Status::Infeasible => Err(CotError::UnexpectedStatus("infeasible")),
        Status::Unbounded => Err(CotError::UnexpectedStatus("unbounded")),
    }
}
