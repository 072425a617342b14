//! Dense two-phase simplex for small linear programs.
//!
//! Minimises `c'x` subject to linear constraints and `x >= 0`. Pivoting uses
//! Bland's rule (lowest-index entering column, lowest-index basic variable on
//! ratio ties), so the method cannot cycle and results are deterministic.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-8;
const ROUNDING_EPS: f64 = 1e-12;
const REFACTOR_EVERY: usize = 100;
pub const MAX_PIVOTS: usize = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub kind: ConstraintKind,
    pub rhs: f64,
}

/// `minimize objective . x` subject to `constraints`, with every variable non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(names: Vec<String>, objective: Vec<f64>) -> Self {
        LinearProgram {
            names,
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coefficients: Vec<f64>, kind: ConstraintKind, rhs: f64) {
        self.constraints.push(Constraint {
            coefficients,
            kind,
            rhs,
        });
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for c in &self.constraints {
            let lhs: f64 = c.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.kind {
                ConstraintKind::Le => lhs - c.rhs,
                ConstraintKind::Ge => c.rhs - lhs,
                ConstraintKind::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub variables: IndexMap<String, f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    pub fn values(&self) -> Vec<f64> {
        self.variables.values().copied().collect()
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; last column is the right-hand side.
    data: Vec<f64>,
    /// The initial tableau, used to rebuild `data` from the current basis.
    original: Vec<f64>,
    /// Cost vector of the current phase.
    c: Vec<f64>,
    /// Reduced-cost row, `cols + 1` wide; last entry is minus the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                for (v, p) in self.data[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.data[r * w + pc] = 0.0;
            }
        }
        let f = self.cost[pc];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Recomputes the reduced-cost row for cost vector `c` (length `cols`).
    fn price(&mut self, c: &[f64]) {
        self.c = c.to_vec();
        self.cost = c.to_vec();
        self.cost.push(0.0);
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                for j in 0..=self.cols {
                    self.cost[j] -= cb * self.at(r, j);
                }
            }
        }
    }

    /// Recomputes `B^-1 A` from the original tableau to shed accumulated
    /// rounding error, then flushes entries at rounding level to zero.
    fn refactor(&mut self) {
        let (m, w) = (self.rows, self.cols + 1);
        let b = DMatrix::from_fn(m, m, |i, k| self.original[i * w + self.basis[k]]);
        let rhs = DMatrix::from_fn(m, w, |i, j| self.original[i * w + j]);
        let Some(solved) = b.lu().solve(&rhs) else {
            return;
        };
        for i in 0..m {
            for j in 0..w {
                let v = solved[(i, j)];
                self.data[i * w + j] = if v.abs() < ROUNDING_EPS { 0.0 } else { v };
            }
            self.data[i * w + self.basis[i]] = 1.0;
        }
        let c = std::mem::take(&mut self.c);
        self.price(&c);
        for v in &mut self.cost {
            if v.abs() < ROUNDING_EPS {
                *v = 0.0;
            }
        }
    }

    fn drop_row(&mut self, r: usize) {
        let w = self.cols + 1;
        self.data.drain(r * w..(r + 1) * w);
        self.original.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }

    /// Runs Bland-rule iterations over columns `< allowed`. With `bounded`
    /// set the objective is known to be bounded below, so a column without a
    /// positive entry only reflects rounding and is passed over.
    fn optimize(&mut self, allowed: usize, bounded: bool) -> LpStatus {
        let mut skip = vec![false; allowed];
        let mut fresh = false;
        loop {
            if self.pivots >= MAX_PIVOTS {
                return LpStatus::MaxIterations;
            }
            if self.pivots % REFACTOR_EVERY == 0 && self.pivots > 0 && !fresh {
                self.refactor();
                fresh = true;
            }
            let Some(pc) = (0..allowed).find(|&j| !skip[j] && self.cost[j] < -COST_EPS) else {
                if fresh {
                    return LpStatus::Optimal;
                }
                self.refactor();
                fresh = true;
                skip.iter_mut().for_each(|s| *s = false);
                continue;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                            if (ratio < bratio && !tie) || (tie && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((pr, _)) => {
                    self.pivot(pr, pc);
                    fresh = false;
                    skip.iter_mut().for_each(|s| *s = false);
                }
                None if bounded => skip[pc] = true,
                None => return LpStatus::Unbounded,
            }
        }
    }
}

/// Solves `lp` by the two-phase simplex method.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n_vars();
    if lp.names.len() != n {
        return Err(Error::InvalidArgument("one name per variable required".into()));
    }
    if lp.constraints.iter().any(|c| c.coefficients.len() != n) {
        return Err(Error::InvalidArgument("constraint width does not match variable count".into()));
    }
    if lp
        .constraints
        .iter()
        .flat_map(|c| c.coefficients.iter().chain(std::iter::once(&c.rhs)))
        .chain(&lp.objective)
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument("non-finite LP coefficient".into()));
    }

    // Normalise to rhs >= 0; Ge rows with zero rhs become Le rows so a slack can start basic.
    let rows: Vec<(Vec<f64>, ConstraintKind, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let flip = c.rhs < 0.0 || (c.rhs == 0.0 && c.kind == ConstraintKind::Ge);
            if flip {
                let kind = match c.kind {
                    ConstraintKind::Le => ConstraintKind::Ge,
                    ConstraintKind::Ge => ConstraintKind::Le,
                    ConstraintKind::Eq => ConstraintKind::Eq,
                };
                (c.coefficients.iter().map(|v| -v).collect(), kind, -c.rhs)
            } else {
                (c.coefficients.clone(), c.kind, c.rhs)
            }
        })
        .collect();

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != ConstraintKind::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != ConstraintKind::Le).count();
    let cols = n + n_slack + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for (r, (coef, kind, rhs)) in rows.iter().enumerate() {
        data[r * w..r * w + n].copy_from_slice(coef);
        data[r * w + cols] = *rhs;
        match kind {
            ConstraintKind::Le => {
                data[r * w + next_slack] = 1.0;
                basis[r] = next_slack;
                next_slack += 1;
            }
            ConstraintKind::Ge => {
                data[r * w + next_slack] = -1.0;
                next_slack += 1;
                data[r * w + next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
            ConstraintKind::Eq => {
                data[r * w + next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
    }
    let mut t = Tableau {
        rows: m,
        cols,
        original: data.clone(),
        c: Vec::new(),
        data,
        cost: vec![0.0; w],
        basis,
        pivots: 0,
    };
    let art_start = n + n_slack;

    if n_art > 0 {
        let phase1: Vec<f64> = (0..cols).map(|j| if j >= art_start { 1.0 } else { 0.0 }).collect();
        t.price(&phase1);
        if let status @ (LpStatus::MaxIterations | LpStatus::Unbounded | LpStatus::Infeasible) = t.optimize(cols, true) {
            return Err(Error::LpFailure(status));
        }
        let scale = 1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max);
        if -t.cost[cols] > FEAS_EPS * scale {
            return Err(Error::LpFailure(LpStatus::Infeasible));
        }
        // Drive remaining (zero-valued) artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < t.rows {
            if t.basis[r] >= art_start {
                if let Some(pc) = (0..art_start).find(|&j| t.at(r, j).abs() > PIVOT_EPS) {
                    t.pivot(r, pc);
                    r += 1;
                } else {
                    t.drop_row(r);
                }
            } else {
                r += 1;
            }
        }
    }

    let mut phase2 = lp.objective.clone();
    phase2.resize(cols, 0.0);
    t.price(&phase2);
    match t.optimize(art_start, false) {
        LpStatus::Optimal => {}
        status => return Err(Error::LpFailure(status)),
    }

    let mut x = vec![0.0; n];
    for r in 0..t.rows {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        variables: lp.names.iter().cloned().zip(x).collect(),
        objective,
        pivots: t.pivots,
    })
}
