//! Bounded-variable revised simplex.
//!
//! The LP is held in computational form `A x - r = 0` with one logical
//! variable `r_i` per row carrying the row limits as bounds, so every
//! variable (structural or logical) is simply bounded. The dual simplex is the
//! workhorse: a slack basis with boxed structurals is dual feasible from the
//! start, and branching only changes bounds, which keeps a parent basis dual
//! feasible. The primal simplex finishes the job when temporary boxes were
//! needed to reach dual feasibility and detects unboundedness.

use serde::{Deserialize, Serialize};

use crate::error::MilpError;
use crate::lu::{BasisFactor, LuFactors};
use crate::sparse::CscMatrix;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 80;
const BLAND_AFTER: usize = 1000;
const ARTIFICIAL_BOX: f64 = 1e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic away from its bounds (free variables, or after artificial boxes are removed).
    Free,
}

/// Basis snapshot used for warm starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
    pub basic: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct Simplex {
    n: usize,
    m: usize,
    a: CscMatrix,
    rows: CscMatrix,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<VarStatus>,
    basic: Vec<usize>,
    x: Vec<f64>,
    d: Vec<f64>,
    dse: Vec<f64>,
    factor: BasisFactor,
    factor_valid: bool,
    primal_valid: bool,
    iterations: usize,
    max_iterations: usize,
    bland: bool,
    degenerate_run: usize,
    // scratch
    rho: Vec<f64>,
    alpha_row: Vec<f64>,
    alpha_col: Vec<f64>,
    tau: Vec<f64>,
}

impl Simplex {
    /// `a` is the `m x n` constraint matrix, `row_lower`/`row_upper` the row
    /// activity limits.
    pub fn new(
        a: CscMatrix,
        cost: &[f64],
        col_lower: &[f64],
        col_upper: &[f64],
        row_lower: &[f64],
        row_upper: &[f64],
    ) -> Simplex {
        let (m, n) = (a.nrows, a.ncols);
        let rows = a.transpose();
        let mut full_cost = cost.to_vec();
        full_cost.resize(n + m, 0.0);
        let lower: Vec<f64> = col_lower.iter().chain(row_lower).copied().collect();
        let upper: Vec<f64> = col_upper.iter().chain(row_upper).copied().collect();
        let mut status = vec![VarStatus::Basic; n + m];
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            let (st, v) = initial_nonbasic(lower[j], upper[j], cost[j]);
            status[j] = st;
            x[j] = v;
        }
        let basic: Vec<usize> = (n..n + m).collect();
        Simplex {
            n,
            m,
            a,
            rows,
            cost: full_cost,
            lower,
            upper,
            status,
            basic,
            x,
            d: vec![0.0; n + m],
            dse: vec![1.0; m],
            factor: BasisFactor::default(),
            factor_valid: false,
            primal_valid: false,
            iterations: 0,
            max_iterations: 50 * (n + m) + 20_000,
            bland: false,
            degenerate_run: 0,
            rho: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
            alpha_col: vec![0.0; m],
            tau: vec![0.0; m],
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.lower[j]
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.upper[j]
    }

    /// Structural values.
    pub fn primal(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// Row duals `y` with `d_j = c_j - y^T a_j`.
    pub fn duals(&mut self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (i, &b) in self.basic.iter().enumerate() {
            y[i] = self.cost[b];
        }
        self.ensure_factor().ok();
        self.factor.btran(&mut y);
        y
    }

    /// Objective of the dual evaluated at the current basis: the sum of
    /// reduced cost times active bound over nonbasic variables.
    pub fn dual_objective(&mut self) -> f64 {
        self.compute_duals();
        (0..self.n + self.m)
            .filter(|&j| self.status[j] != VarStatus::Basic)
            .map(|j| self.d[j] * self.x[j])
            .sum()
    }

    pub fn basis(&self) -> Basis {
        Basis {
            status: self.status.clone(),
            basic: self.basic.clone(),
        }
    }

    pub fn load_basis(&mut self, basis: &Basis) {
        assert_eq!(basis.status.len(), self.n + self.m);
        assert_eq!(basis.basic.len(), self.m);
        self.status.clone_from(&basis.status);
        self.basic.clone_from(&basis.basic);
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic {
                self.place_nonbasic(j);
            }
        }
        self.factor_valid = false;
        self.primal_valid = false;
        self.dse.iter_mut().for_each(|w| *w = 1.0);
    }

    /// Changes the bounds of structural or logical `j`, keeping the basis.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.status[j] != VarStatus::Basic {
            self.place_nonbasic(j);
            self.primal_valid = false;
        }
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        let (st, v) = match self.status[j] {
            VarStatus::AtLower if lo.is_finite() => (VarStatus::AtLower, lo),
            VarStatus::AtUpper if hi.is_finite() => (VarStatus::AtUpper, hi),
            VarStatus::Free => {
                let v = self.x[j].clamp(lo, hi);
                if v == lo {
                    (VarStatus::AtLower, lo)
                } else if v == hi {
                    (VarStatus::AtUpper, hi)
                } else {
                    (VarStatus::Free, if v.is_finite() { v } else { 0.0 })
                }
            }
            _ if lo.is_finite() => (VarStatus::AtLower, lo),
            _ if hi.is_finite() => (VarStatus::AtUpper, hi),
            _ => (VarStatus::Free, 0.0),
        };
        self.status[j] = st;
        self.x[j] = v;
    }

    fn scatter_column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for (i, v) in self.a.col(j) {
                out[i] = v;
            }
        } else {
            out[j - self.n] = -1.0;
        }
    }

    fn refactor(&mut self) -> Result<(), MilpError> {
        for _attempt in 0..3 {
            let columns: Vec<Vec<(usize, f64)>> = self
                .basic
                .iter()
                .map(|&j| {
                    if j < self.n {
                        self.a.col(j).collect()
                    } else {
                        vec![(j - self.n, -1.0)]
                    }
                })
                .collect();
            match LuFactors::factorize(self.m, columns) {
                Ok(lu) => {
                    self.factor = BasisFactor::new(lu);
                    self.factor_valid = true;
                    return Ok(());
                }
                Err(singular) => {
                    log::debug!(
                        "singular basis (rank {}), repairing with logicals",
                        singular.rank
                    );
                    for (&pos, &row) in singular.missing_cols.iter().zip(&singular.missing_rows) {
                        let out = self.basic[pos];
                        let logical = self.n + row;
                        self.status[out] = VarStatus::AtLower;
                        self.place_nonbasic(out);
                        self.basic[pos] = logical;
                        self.status[logical] = VarStatus::Basic;
                        self.dse[pos] = 1.0;
                    }
                    self.primal_valid = false;
                }
            }
        }
        Err(MilpError::NumericalBreakdown {
            iterations: self.iterations,
            detail: "basis repair failed".into(),
        })
    }

    fn ensure_factor(&mut self) -> Result<(), MilpError> {
        if !self.factor_valid || self.factor.num_updates() >= REFACTOR_EVERY {
            self.refactor()?;
            self.primal_valid = false;
        }
        Ok(())
    }

    fn compute_primal(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < self.n {
                for (i, v) in self.a.col(j) {
                    rhs[i] -= v * xj;
                }
            } else {
                rhs[j - self.n] += xj;
            }
        }
        self.factor.ftran(&mut rhs);
        for (i, &b) in self.basic.iter().enumerate() {
            self.x[b] = rhs[i];
        }
        self.primal_valid = true;
    }

    fn compute_duals(&mut self) {
        let mut y = vec![0.0; self.m];
        for (i, &b) in self.basic.iter().enumerate() {
            y[i] = self.cost[b];
        }
        self.factor.btran(&mut y);
        for j in 0..self.n {
            if self.status[j] == VarStatus::Basic {
                self.d[j] = 0.0;
            } else {
                let dot: f64 = self.a.col(j).map(|(i, v)| y[i] * v).sum();
                self.d[j] = self.cost[j] - dot;
            }
        }
        for i in 0..self.m {
            let j = self.n + i;
            self.d[j] = if self.status[j] == VarStatus::Basic {
                0.0
            } else {
                y[i]
            };
        }
    }

    fn refresh(&mut self) -> Result<(), MilpError> {
        self.ensure_factor()?;
        self.compute_primal();
        self.compute_duals();
        Ok(())
    }

    fn dual_infeasibility(&self, j: usize) -> f64 {
        if self.lower[j] == self.upper[j] {
            return 0.0;
        }
        match self.status[j] {
            VarStatus::Basic => 0.0,
            VarStatus::AtLower => (-self.d[j]).max(0.0),
            VarStatus::AtUpper => self.d[j].max(0.0),
            VarStatus::Free => self.d[j].abs(),
        }
    }

    fn max_dual_infeasibility(&self) -> f64 {
        (0..self.n + self.m)
            .map(|j| self.dual_infeasibility(j))
            .fold(0.0, f64::max)
    }

    pub fn max_primal_infeasibility(&self) -> f64 {
        self.basic
            .iter()
            .map(|&b| {
                (self.lower[b] - self.x[b])
                    .max(self.x[b] - self.upper[b])
                    .max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Flips boxed nonbasics to the bound matching their reduced cost and
    /// installs temporary boxes where the needed bound is infinite. Returns the
    /// original bounds of boxed variables.
    fn make_dual_feasible(&mut self) -> Vec<(usize, f64, f64)> {
        let mut boxed = Vec::new();
        let mut moved = false;
        for j in 0..self.n + self.m {
            if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.d[j];
            let want_upper = d < -DUAL_TOL;
            let want_lower = d > DUAL_TOL;
            let target = match self.status[j] {
                VarStatus::AtLower if want_upper => Some(VarStatus::AtUpper),
                VarStatus::AtUpper if want_lower => Some(VarStatus::AtLower),
                VarStatus::Free if want_upper => Some(VarStatus::AtUpper),
                VarStatus::Free if want_lower => Some(VarStatus::AtLower),
                _ => None,
            };
            let Some(target) = target else { continue };
            let (lo, hi) = (self.lower[j], self.upper[j]);
            match target {
                VarStatus::AtUpper => {
                    if !hi.is_finite() {
                        boxed.push((j, lo, hi));
                        let base = if lo.is_finite() {
                            lo.max(self.x[j])
                        } else {
                            self.x[j]
                        };
                        self.upper[j] = base + ARTIFICIAL_BOX;
                    }
                    self.x[j] = self.upper[j];
                }
                _ => {
                    if !lo.is_finite() {
                        boxed.push((j, lo, hi));
                        let base = if hi.is_finite() {
                            hi.min(self.x[j])
                        } else {
                            self.x[j]
                        };
                        self.lower[j] = base - ARTIFICIAL_BOX;
                    }
                    self.x[j] = self.lower[j];
                }
            }
            self.status[j] = target;
            moved = true;
        }
        if moved {
            self.primal_valid = false;
        }
        boxed
    }

    /// Solves from the current basis.
    pub fn solve(&mut self) -> Result<LpStatus, MilpError> {
        self.bland = false;
        self.degenerate_run = 0;
        self.refresh()?;
        let boxed = self.make_dual_feasible();
        if !self.primal_valid {
            self.compute_primal();
        }
        let status = match self.dual_simplex() {
            Ok(st) => st,
            Err(e) => {
                // Leave no temporary box behind for the next solve.
                for &(j, lo, hi) in &boxed {
                    self.lower[j] = lo;
                    self.upper[j] = hi;
                    if self.status[j] != VarStatus::Basic {
                        self.place_nonbasic(j);
                    }
                }
                self.primal_valid = false;
                return Err(e);
            }
        };
        if !boxed.is_empty() {
            let mut hit_box = false;
            for &(j, lo, hi) in &boxed {
                let at_box = self.status[j] != VarStatus::Basic
                    && ((self.x[j] == self.lower[j] && lo != self.lower[j])
                        || (self.x[j] == self.upper[j] && hi != self.upper[j]));
                self.lower[j] = lo;
                self.upper[j] = hi;
                if at_box {
                    hit_box = true;
                    self.status[j] = VarStatus::Free;
                } else if self.status[j] != VarStatus::Basic {
                    self.place_nonbasic(j);
                }
            }
            if status == LpStatus::Infeasible && !hit_box {
                return Ok(LpStatus::Infeasible);
            }
            if status == LpStatus::Infeasible {
                // The box may have cut off every feasible point; fall back to a
                // composite primal start from the current basis.
                return self.primal_with_phase_one();
            }
            self.primal_valid = false;
        }
        if status == LpStatus::Infeasible {
            return Ok(LpStatus::Infeasible);
        }
        self.refresh()?;
        if self.max_primal_infeasibility() > 1e-7 {
            // Drift after refactorisation: one more dual pass.
            if self.max_dual_infeasibility() <= DUAL_TOL * 10.0 {
                let st = self.dual_simplex()?;
                if st == LpStatus::Infeasible {
                    return Ok(st);
                }
                self.refresh()?;
            } else {
                return self.primal_with_phase_one();
            }
        }
        if self.max_dual_infeasibility() > DUAL_TOL {
            let st = self.primal_simplex()?;
            if st != LpStatus::Optimal {
                return Ok(st);
            }
        }
        Ok(LpStatus::Optimal)
    }

    fn check_iterations(&self) -> Result<(), MilpError> {
        if self.iterations >= self.max_iterations {
            Err(MilpError::IterationLimit(self.max_iterations))
        } else {
            Ok(())
        }
    }

    fn compute_tableau_row(&mut self) {
        let n = self.n;
        self.alpha_row.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.m {
            let r = self.rho[i];
            if r == 0.0 {
                continue;
            }
            for (j, v) in self.rows.col(i) {
                self.alpha_row[j] += r * v;
            }
            self.alpha_row[n + i] = -r;
        }
    }

    fn dual_simplex(&mut self) -> Result<LpStatus, MilpError> {
        let mut retried_infeasible = false;
        let mut bad_pivots = 0;
        // Entering candidates refused for the current leaving row.
        let mut rejected: Vec<usize> = Vec::new();
        loop {
            self.check_iterations()?;
            if !self.factor_valid || self.factor.num_updates() >= REFACTOR_EVERY {
                self.refresh()?;
            }

            let Some((r, delta)) = self.select_leaving() else {
                return Ok(LpStatus::Optimal);
            };

            self.rho.iter_mut().for_each(|v| *v = 0.0);
            self.rho[r] = 1.0;
            let mut rho = std::mem::take(&mut self.rho);
            self.factor.btran(&mut rho);
            self.rho = rho;
            self.compute_tableau_row();

            let Some(q) = self.dual_ratio_test(delta, &rejected) else {
                if !rejected.is_empty() {
                    return Err(MilpError::NumericalBreakdown {
                        iterations: self.iterations,
                        detail: "no acceptable pivot in the dual ratio test".into(),
                    });
                }
                if !retried_infeasible && self.factor.num_updates() > 0 {
                    retried_infeasible = true;
                    self.refactor()?;
                    self.compute_primal();
                    self.compute_duals();
                    continue;
                }
                return Ok(LpStatus::Infeasible);
            };
            retried_infeasible = false;

            let mut col = std::mem::take(&mut self.alpha_col);
            self.scatter_column(q, &mut col);
            self.factor.ftran(&mut col);
            self.alpha_col = col;

            let alpha_r = self.alpha_col[r];
            let alpha_q = self.alpha_row[q];
            if (alpha_r - alpha_q).abs() > 1e-7 * (1.0 + alpha_r.abs()) || alpha_r.abs() < PIVOT_TOL
            {
                bad_pivots += 1;
                if bad_pivots > 50 {
                    return Err(MilpError::NumericalBreakdown {
                        iterations: self.iterations,
                        detail: format!("pivot mismatch {alpha_r:e} vs {alpha_q:e}"),
                    });
                }
                if self.factor.num_updates() > 0 {
                    self.refresh()?;
                } else {
                    // Fresh factors still disagree: the pivot is unusable.
                    rejected.push(q);
                }
                continue;
            }
            rejected.clear();

            // Dual update.
            let mut dq = self.d[q];
            let leaving = self.basic[r];
            if dq * alpha_q < 0.0 && self.status[q] != VarStatus::Free {
                dq = 0.0;
            }
            let theta_d = dq / alpha_q;
            if theta_d.abs() < 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > BLAND_AFTER {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }
            if theta_d != 0.0 {
                for j in 0..self.n + self.m {
                    if self.status[j] != VarStatus::Basic && self.alpha_row[j] != 0.0 {
                        self.d[j] -= theta_d * self.alpha_row[j];
                    }
                }
            }
            self.d[q] = 0.0;
            self.d[leaving] = -theta_d;

            // Primal update.
            let theta_p = delta / alpha_r;
            for i in 0..self.m {
                let a = self.alpha_col[i];
                if a != 0.0 {
                    self.x[self.basic[i]] -= theta_p * a;
                }
            }
            self.x[q] += theta_p;

            // Dual steepest edge weights.
            let w_r: f64 = self.rho.iter().map(|v| v * v).sum();
            self.tau.copy_from_slice(&self.rho);
            let mut tau = std::mem::take(&mut self.tau);
            self.factor.ftran(&mut tau);
            self.tau = tau;
            for i in 0..self.m {
                if i == r {
                    continue;
                }
                let a = self.alpha_col[i];
                if a == 0.0 {
                    continue;
                }
                let k = a / alpha_r;
                self.dse[i] = (self.dse[i] - 2.0 * k * self.tau[i] + k * k * w_r).max(1e-8);
            }
            self.dse[r] = (w_r / (alpha_r * alpha_r)).max(1e-8);

            // Basis change.
            let (st, v) = if delta < 0.0 {
                (VarStatus::AtLower, self.lower[leaving])
            } else {
                (VarStatus::AtUpper, self.upper[leaving])
            };
            self.status[leaving] = st;
            self.x[leaving] = v;
            self.status[q] = VarStatus::Basic;
            self.basic[r] = q;
            let col = std::mem::take(&mut self.alpha_col);
            self.factor.update(r, &col);
            self.alpha_col = col;
            self.iterations += 1;
        }
    }

    /// Basic position with the largest weighted infeasibility and the signed
    /// distance to the violated bound.
    fn select_leaving(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for (i, &b) in self.basic.iter().enumerate() {
            let v = self.x[b];
            let delta = if v < self.lower[b] - PRIMAL_TOL {
                v - self.lower[b]
            } else if v > self.upper[b] + PRIMAL_TOL {
                v - self.upper[b]
            } else {
                continue;
            };
            if self.bland {
                if best.is_none_or(|(bi, _)| b < self.basic[bi]) {
                    best = Some((i, delta));
                }
                continue;
            }
            let score = delta * delta / self.dse[i];
            if score > best_score {
                best_score = score;
                best = Some((i, delta));
            }
        }
        best
    }

    /// Harris two-pass dual ratio test. Returns the entering variable.
    fn dual_ratio_test(&self, delta: f64, rejected: &[usize]) -> Option<usize> {
        let sign = delta.signum();
        let eligible = |j: usize| -> Option<(f64, f64)> {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lower[j] == self.upper[j] || rejected.contains(&j) {
                return None;
            }
            let a = self.alpha_row[j];
            if a.abs() < PIVOT_TOL {
                return None;
            }
            let s = a.signum() * sign;
            let d = match st {
                VarStatus::AtLower if s > 0.0 => self.d[j].max(0.0),
                VarStatus::AtUpper if s < 0.0 => (-self.d[j]).max(0.0),
                VarStatus::Free => self.d[j].abs(),
                _ => return None,
            };
            Some((d, a.abs()))
        };

        let mut bound = f64::INFINITY;
        for j in 0..self.n + self.m {
            if let Some((d, a)) = eligible(j) {
                bound = bound.min((d + DUAL_TOL) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        let mut best_key = (f64::NEG_INFINITY, f64::INFINITY);
        for j in 0..self.n + self.m {
            if let Some((d, a)) = eligible(j) {
                let ratio = d / a;
                if ratio > bound {
                    continue;
                }
                if self.bland {
                    // smallest ratio, then lowest index
                    if best.is_none() || ratio < best_key.1 {
                        best = Some(j);
                        best_key = (a, ratio);
                    }
                } else if a > best_key.0 {
                    best = Some(j);
                    best_key = (a, ratio);
                }
            }
        }
        best
    }

    /// Primal simplex from a primal feasible basis.
    fn primal_simplex(&mut self) -> Result<LpStatus, MilpError> {
        self.bland = false;
        self.degenerate_run = 0;
        loop {
            self.check_iterations()?;
            self.ensure_factor()?;
            if !self.primal_valid {
                self.compute_primal();
            }
            self.compute_duals();

            let Some(q) = self.select_entering() else {
                self.dse.iter_mut().for_each(|w| *w = 1.0);
                return Ok(LpStatus::Optimal);
            };
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
            let mut col = std::mem::take(&mut self.alpha_col);
            self.scatter_column(q, &mut col);
            self.factor.ftran(&mut col);
            self.alpha_col = col;

            let (leave, step) = self.primal_ratio_test(dir);
            let span = self.upper[q] - self.lower[q];
            let flip = span.is_finite() && self.status[q] != VarStatus::Free && span <= step;
            if !step.is_finite() && !flip {
                return Ok(LpStatus::Unbounded);
            }
            let t = if flip { span } else { step.max(0.0) };
            if t < 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > BLAND_AFTER {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }
            for i in 0..self.m {
                let a = self.alpha_col[i];
                if a != 0.0 {
                    self.x[self.basic[i]] -= a * dir * t;
                }
            }
            self.x[q] += dir * t;
            self.iterations += 1;
            if flip {
                if dir > 0.0 {
                    self.status[q] = VarStatus::AtUpper;
                    self.x[q] = self.upper[q];
                } else {
                    self.status[q] = VarStatus::AtLower;
                    self.x[q] = self.lower[q];
                }
                continue;
            }
            let r = leave.expect("finite step has a leaving row");
            let leaving = self.basic[r];
            let rate = -self.alpha_col[r] * dir;
            if rate < 0.0 {
                self.status[leaving] = VarStatus::AtLower;
                self.x[leaving] = self.lower[leaving];
            } else {
                self.status[leaving] = VarStatus::AtUpper;
                self.x[leaving] = self.upper[leaving];
            }
            self.status[q] = VarStatus::Basic;
            self.basic[r] = q;
            let col = std::mem::take(&mut self.alpha_col);
            self.factor.update(r, &col);
            self.alpha_col = col;
        }
    }

    fn select_entering(&self) -> Option<usize> {
        let mut best = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.d[j];
            let can_up = self.x[j] < self.upper[j];
            let can_down = self.x[j] > self.lower[j];
            let score = if d < -DUAL_TOL && can_up {
                -d
            } else if d > DUAL_TOL && can_down {
                d
            } else {
                continue;
            };
            if self.bland {
                return Some(j);
            }
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        best
    }

    fn primal_ratio_test(&self, dir: f64) -> (Option<usize>, f64) {
        let limit = |i: usize, tol: f64| -> Option<f64> {
            let a = self.alpha_col[i];
            if a.abs() < PIVOT_TOL {
                return None;
            }
            let b = self.basic[i];
            let rate = -a * dir;
            if rate < 0.0 {
                let lo = self.lower[b];
                lo.is_finite()
                    .then(|| ((self.x[b] - lo + tol) / -rate).max(0.0))
            } else {
                let hi = self.upper[b];
                hi.is_finite()
                    .then(|| ((hi - self.x[b] + tol) / rate).max(0.0))
            }
        };
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            if let Some(t) = limit(i, PRIMAL_TOL) {
                bound = bound.min(t);
            }
        }
        if !bound.is_finite() {
            return (None, f64::INFINITY);
        }
        let mut best = None;
        let mut best_a = 0.0;
        let mut best_t = f64::INFINITY;
        for i in 0..self.m {
            if let Some(t) = limit(i, 0.0) {
                if t > bound {
                    continue;
                }
                let a = self.alpha_col[i].abs();
                let better = if self.bland {
                    best.is_none_or(|bi: usize| self.basic[i] < self.basic[bi])
                } else {
                    a > best_a
                };
                if better {
                    best = Some(i);
                    best_a = a;
                    best_t = t;
                }
            }
        }
        (best, best_t)
    }

    /// Composite primal method: minimise the sum of infeasibilities, then the
    /// true objective.
    fn primal_with_phase_one(&mut self) -> Result<LpStatus, MilpError> {
        let saved_cost = self.cost.clone();
        let feasible = self.phase_one();
        self.cost = saved_cost;
        if !feasible? {
            return Ok(LpStatus::Infeasible);
        }
        self.primal_simplex()
    }

    /// Minimises the sum of bound violations of the basics with the current
    /// cost vector overwritten. Returns whether a feasible basis was reached.
    fn phase_one(&mut self) -> Result<bool, MilpError> {
        loop {
            self.check_iterations()?;
            self.refresh()?;
            let mut phase_cost = vec![0.0; self.n + self.m];
            let mut infeasible = false;
            for &b in &self.basic {
                if self.x[b] < self.lower[b] - PRIMAL_TOL {
                    phase_cost[b] = -1.0;
                    infeasible = true;
                } else if self.x[b] > self.upper[b] + PRIMAL_TOL {
                    phase_cost[b] = 1.0;
                    infeasible = true;
                }
            }
            if !infeasible {
                break;
            }
            self.cost = phase_cost;
            self.compute_duals();
            let Some(q) = self.select_entering() else {
                return Ok(false);
            };
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
            let mut col = std::mem::take(&mut self.alpha_col);
            self.scatter_column(q, &mut col);
            self.factor.ftran(&mut col);
            self.alpha_col = col;
            // Textbook phase-one step: move until the first basic variable
            // reaches a bound it is approaching from the feasible side, or an
            // infeasible one becomes feasible.
            let mut step = f64::INFINITY;
            let mut leave = None;
            for i in 0..self.m {
                let a = self.alpha_col[i];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basic[i];
                let rate = -a * dir;
                let (lo, hi, v) = (self.lower[b], self.upper[b], self.x[b]);
                let t = if rate < 0.0 {
                    if v > hi + PRIMAL_TOL {
                        (v - hi) / -rate
                    } else if v >= lo - PRIMAL_TOL && lo.is_finite() {
                        (v - lo).max(0.0) / -rate
                    } else {
                        continue;
                    }
                } else if v < lo - PRIMAL_TOL {
                    (lo - v) / rate
                } else if v <= hi + PRIMAL_TOL && hi.is_finite() {
                    (hi - v).max(0.0) / rate
                } else {
                    continue;
                };
                if t < step {
                    step = t;
                    leave = Some(i);
                }
            }
            let span = self.upper[q] - self.lower[q];
            let flip = span.is_finite() && self.status[q] != VarStatus::Free && span <= step;
            if !step.is_finite() && !flip {
                return Err(MilpError::NumericalBreakdown {
                    iterations: self.iterations,
                    detail: "unbounded phase-one direction".into(),
                });
            }
            let t = if flip { span } else { step };
            for i in 0..self.m {
                let a = self.alpha_col[i];
                if a != 0.0 {
                    self.x[self.basic[i]] -= a * dir * t;
                }
            }
            self.x[q] += dir * t;
            self.iterations += 1;
            if flip {
                self.status[q] = if dir > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.x[q] = if dir > 0.0 {
                    self.upper[q]
                } else {
                    self.lower[q]
                };
                self.primal_valid = true;
                continue;
            }
            let r = leave.unwrap();
            let leaving = self.basic[r];
            let v = self.x[leaving];
            let (st, val) = if (v - self.lower[leaving]).abs() <= (v - self.upper[leaving]).abs() {
                (VarStatus::AtLower, self.lower[leaving])
            } else {
                (VarStatus::AtUpper, self.upper[leaving])
            };
            self.status[leaving] = st;
            self.x[leaving] = val;
            self.status[q] = VarStatus::Basic;
            self.basic[r] = q;
            let col = std::mem::take(&mut self.alpha_col);
            self.factor.update(r, &col);
            self.alpha_col = col;
            self.primal_valid = false;
        }
        Ok(true)
    }
}

fn initial_nonbasic(lo: f64, hi: f64, c: f64) -> (VarStatus, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) if c < 0.0 => (VarStatus::AtUpper, hi),
        (true, _) if c >= 0.0 || !hi.is_finite() => (VarStatus::AtLower, lo),
        (true, true) => (VarStatus::AtUpper, hi),
        (false, true) => (VarStatus::AtUpper, hi),
        _ => (VarStatus::Free, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(rows: &[(&[f64], f64, f64)], cost: &[f64], lo: &[f64], hi: &[f64]) -> Simplex {
        let n = cost.len();
        let mut trip = Vec::new();
        for (i, (coef, _, _)) in rows.iter().enumerate() {
            for j in 0..n {
                if coef[j] != 0.0 {
                    trip.push((i, j, coef[j]));
                }
            }
        }
        let a = CscMatrix::from_triplets(rows.len(), n, &trip);
        let rl: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let ru: Vec<f64> = rows.iter().map(|r| r.2).collect();
        Simplex::new(a, cost, lo, hi, &rl, &ru)
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn small_boxed_lp() {
        // min -x - y, x + 2y <= 4, 3x + y <= 6, 0 <= x,y <= 10
        let mut s = lp(
            &[(&[1.0, 2.0], -INF, 4.0), (&[3.0, 1.0], -INF, 6.0)],
            &[-1.0, -1.0],
            &[0.0, 0.0],
            &[10.0, 10.0],
        );
        assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 2.8).abs() < 1e-9);
        assert!((s.primal()[0] - 1.6).abs() < 1e-9);
        assert!((s.dual_objective() - s.objective()).abs() < 1e-9);
    }

    #[test]
    fn unbounded_below_needs_primal_phase() {
        // min -x, x - y <= 1, x,y >= 0 unbounded
        let mut s = lp(
            &[(&[1.0, -1.0], -INF, 1.0)],
            &[-1.0, 0.0],
            &[0.0, 0.0],
            &[INF, INF],
        );
        assert_eq!(s.solve().unwrap(), LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_rows() {
        let mut s = lp(
            &[(&[1.0], 2.0, INF), (&[1.0], -INF, 1.0)],
            &[1.0],
            &[-INF],
            &[INF],
        );
        assert_eq!(s.solve().unwrap(), LpStatus::Infeasible);
    }

    #[test]
    fn equality_with_free_variables() {
        // min x + y, x - y = 1, x + y >= 3, free vars
        let mut s = lp(
            &[(&[1.0, -1.0], 1.0, 1.0), (&[1.0, 1.0], 3.0, INF)],
            &[1.0, 1.0],
            &[-INF, -INF],
            &[INF, INF],
        );
        assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() - 3.0).abs() < 1e-9);
        assert!((s.primal()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_after_bound_change() {
        let mut s = lp(
            &[(&[1.0, 2.0], -INF, 4.0), (&[3.0, 1.0], -INF, 6.0)],
            &[-1.0, -1.0],
            &[0.0, 0.0],
            &[10.0, 10.0],
        );
        s.solve().unwrap();
        let b = s.basis();
        s.set_bounds(0, 0.0, 1.0);
        assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 2.5).abs() < 1e-9);
        s.set_bounds(0, 0.0, 10.0);
        s.load_basis(&b);
        assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 2.8).abs() < 1e-9);
    }
}
