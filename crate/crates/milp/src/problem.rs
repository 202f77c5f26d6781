//! Solver-agnostic MILP instance: sparse rows, variable bounds and integrality marks.

use serde::{Deserialize, Serialize};

use crate::error::MilpError;

/// Row sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// `(variable, coefficient)` pairs. Duplicate variables are summed on use.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }

    /// Lower and upper limit of the row activity.
    pub fn range(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
            Relation::Eq => (self.rhs, self.rhs),
        }
    }
}

/// A minimisation problem `min c^T x` over linear rows, bounds and integrality marks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub var_names: Vec<String>,
    pub constraints: Vec<Constraint>,
}

impl MilpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.integer.push(false);
        self.var_names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        let j = self.add_var(name, 0.0, 1.0, cost);
        self.integer[j] = true;
        j
    }

    pub fn add_integer(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> usize {
        let j = self.add_var(name, lower, upper, cost);
        self.integer[j] = true;
        j
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Fixes a variable at `value` by collapsing its bounds.
    pub fn fix(&mut self, var: usize, value: f64) {
        self.lower[var] = value;
        self.upper[var] = value;
    }

    pub fn is_binary(&self, var: usize) -> bool {
        self.integer[var] && self.lower[var] >= 0.0 && self.upper[var] <= 1.0
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = (0..self.num_vars())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Largest distance of an integer variable from the nearest integer.
    pub fn max_fractionality(&self, x: &[f64]) -> f64 {
        (0..self.num_vars())
            .filter(|&j| self.integer[j])
            .map(|j| (x[j] - x[j].round()).abs())
            .fold(0.0, f64::max)
    }

    /// Structural checks: dimensions agree, rows reference declared variables,
    /// bounds are ordered and binaries stay within `[0, 1]`.
    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.num_vars();
        if self.lower.len() != n
            || self.upper.len() != n
            || self.integer.len() != n
            || self.var_names.len() != n
        {
            return Err(MilpError::Malformed(
                "variable arrays differ in length".into(),
            ));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.objective[j].is_nan() {
                return Err(MilpError::Malformed(format!(
                    "NaN in variable {}",
                    self.var_names[j]
                )));
            }
            if self.lower[j] > self.upper[j] {
                return Err(MilpError::Malformed(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    self.var_names[j], self.lower[j], self.upper[j]
                )));
            }
        }
        for c in &self.constraints {
            if c.rhs.is_nan() || !c.rhs.is_finite() {
                return Err(MilpError::Malformed(format!(
                    "row {} has a non-finite rhs",
                    c.name
                )));
            }
            for &(j, a) in &c.coeffs {
                if j >= n {
                    return Err(MilpError::UnknownVariable {
                        row: c.name.clone(),
                        var: j,
                    });
                }
                if !a.is_finite() {
                    return Err(MilpError::Malformed(format!(
                        "row {} has a non-finite coefficient",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }
}
