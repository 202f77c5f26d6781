//! LP relaxation of a [`MilpProblem`]: fixed-variable presolve around the simplex core.

use serde::{Deserialize, Serialize};

use crate::error::MilpError;
use crate::problem::MilpProblem;
use crate::simplex::{Basis, LpStatus, Simplex};
use crate::sparse::CscMatrix;

const EMPTY_ROW_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of all problem variables, fixed ones included.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals: the objective's rate of change per unit increase of each rhs.
    pub duals: Vec<f64>,
    /// Objective of the dual certificate at the final basis.
    pub dual_objective: f64,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

/// Solves the continuous relaxation of `p`, optionally from a basis returned
/// by an earlier call on a problem of identical shape.
pub fn lp_solve(p: &MilpProblem, basis: Option<&Basis>) -> Result<LpSolution, MilpError> {
    p.validate()?;
    let mut relax = Relaxation::new(p, &p.lower, &p.upper);
    if let Some(b) = basis {
        relax.load_basis(b);
    }
    let status = relax.solve()?;
    Ok(relax.solution(p, status))
}

/// Simplex instance over the non-fixed columns of a problem. Columns fixed at
/// construction time are folded into the row limits; empty rows are checked
/// once and dropped.
#[derive(Clone, Debug)]
pub(crate) struct Relaxation {
    simplex: Simplex,
    col_of: Vec<Option<usize>>,
    row_of: Vec<Option<usize>>,
    fixed: Vec<f64>,
    offset: f64,
    trivially_infeasible: bool,
}

impl Relaxation {
    pub(crate) fn new(p: &MilpProblem, lower: &[f64], upper: &[f64]) -> Relaxation {
        let n = p.num_vars();
        let mut col_of = vec![None; n];
        let mut fixed = vec![0.0; n];
        let mut cols = Vec::new();
        for j in 0..n {
            if lower[j] == upper[j] {
                fixed[j] = lower[j];
            } else {
                col_of[j] = Some(cols.len());
                cols.push(j);
            }
        }
        let offset: f64 = (0..n)
            .filter(|&j| col_of[j].is_none())
            .map(|j| p.objective[j] * fixed[j])
            .sum();

        let mut row_of = vec![None; p.num_constraints()];
        let mut triplets = Vec::new();
        let (mut rl, mut ru) = (Vec::new(), Vec::new());
        let mut trivially_infeasible = false;
        for (r, c) in p.constraints.iter().enumerate() {
            let mut shift = 0.0;
            let mut entries = Vec::new();
            for &(j, a) in &c.coeffs {
                match col_of[j] {
                    Some(k) => entries.push((k, a)),
                    None => shift += a * fixed[j],
                }
            }
            let (lo, hi) = c.range();
            let (lo, hi) = (lo - shift, hi - shift);
            let merged: f64 = entries.iter().map(|e| e.1.abs()).sum();
            if entries.is_empty() || merged == 0.0 {
                if lo > EMPTY_ROW_TOL || hi < -EMPTY_ROW_TOL {
                    trivially_infeasible = true;
                }
                continue;
            }
            let i = rl.len();
            row_of[r] = Some(i);
            for (k, a) in entries {
                triplets.push((i, k, a));
            }
            rl.push(lo);
            ru.push(hi);
        }
        let a = CscMatrix::from_triplets(rl.len(), cols.len(), &triplets);
        let cost: Vec<f64> = cols.iter().map(|&j| p.objective[j]).collect();
        let lo: Vec<f64> = cols.iter().map(|&j| lower[j]).collect();
        let hi: Vec<f64> = cols.iter().map(|&j| upper[j]).collect();
        Relaxation {
            simplex: Simplex::new(a, &cost, &lo, &hi, &rl, &ru),
            col_of,
            row_of,
            fixed,
            offset,
            trivially_infeasible,
        }
    }

    /// Bounds of a problem variable as currently seen by the LP.
    pub(crate) fn bounds(&self, var: usize) -> (f64, f64) {
        match self.col_of[var] {
            Some(k) => (self.simplex.lower(k), self.simplex.upper(k)),
            None => (self.fixed[var], self.fixed[var]),
        }
    }

    /// Changes bounds of a non-presolved variable.
    pub(crate) fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        let k = self.col_of[var].expect("variable removed by presolve");
        self.simplex.set_bounds(k, lower, upper);
    }

    pub(crate) fn basis(&self) -> Basis {
        self.simplex.basis()
    }

    pub(crate) fn load_basis(&mut self, basis: &Basis) {
        self.simplex.load_basis(basis);
    }

    pub(crate) fn solve(&mut self) -> Result<LpStatus, MilpError> {
        if self.trivially_infeasible {
            return Ok(LpStatus::Infeasible);
        }
        self.simplex.solve()
    }

    pub(crate) fn objective(&self) -> f64 {
        self.offset + self.simplex.objective()
    }

    pub(crate) fn iterations(&self) -> usize {
        self.simplex.iterations()
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        let xs = self.simplex.primal();
        self.col_of
            .iter()
            .enumerate()
            .map(|(j, c)| c.map_or(self.fixed[j], |k| xs[k]))
            .collect()
    }

    pub(crate) fn solution(&mut self, p: &MilpProblem, status: LpStatus) -> LpSolution {
        let optimal = status == LpStatus::Optimal;
        let y = if optimal {
            self.simplex.duals()
        } else {
            Vec::new()
        };
        let duals = self
            .row_of
            .iter()
            .map(|r| match r {
                Some(i) if optimal => y[*i],
                _ => 0.0,
            })
            .collect();
        let x = if self.trivially_infeasible {
            p.lower.clone()
        } else {
            self.values()
        };
        let (objective, dual_objective) = if optimal {
            (
                self.objective(),
                self.offset + self.simplex.dual_objective(),
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        LpSolution {
            status,
            x,
            objective,
            duals,
            dual_objective,
            basis: (!self.trivially_infeasible).then(|| self.simplex.basis()),
            iterations: self.simplex.iterations(),
        }
    }
}
