use serde::{Deserialize, Serialize};

use gridsplit_milp::{LpStatus, MilpStatus};

use crate::network::TopologyDecision;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped by a limit with a feasible plan; see the gap.
    Feasible,
    Infeasible,
    Unbounded,
    /// Stopped by a limit before any feasible plan was found.
    BudgetExhausted,
}

impl From<MilpStatus> for SolveStatus {
    fn from(s: MilpStatus) -> Self {
        match s {
            MilpStatus::Optimal => SolveStatus::Optimal,
            MilpStatus::Feasible => SolveStatus::Feasible,
            MilpStatus::Infeasible => SolveStatus::Infeasible,
            MilpStatus::Unbounded => SolveStatus::Unbounded,
            MilpStatus::BudgetExhausted => SolveStatus::BudgetExhausted,
        }
    }
}

impl From<LpStatus> for SolveStatus {
    fn from(s: LpStatus) -> Self {
        match s {
            LpStatus::Optimal => SolveStatus::Optimal,
            LpStatus::Infeasible => SolveStatus::Infeasible,
            LpStatus::Unbounded => SolveStatus::Unbounded,
        }
    }
}

/// Outcome of a dispatch or topology solve. Vectors are empty when no
/// solution exists; quantities are per unit, the objective is in $/h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    /// Relative gap; `None` without an incumbent.
    pub gap: Option<f64>,
    /// Per generator record.
    pub dispatch: Vec<f64>,
    /// Per bus of the input network.
    pub theta: Vec<f64>,
    /// Per line of the input network: zero when switched, the transferred
    /// injection when re-terminated by a split.
    pub flows: Vec<f64>,
    pub decisions: Vec<TopologyDecision>,
    /// Connected components of the post-event network.
    pub islands: usize,
    pub nodes: usize,
    pub wall_time_s: f64,
}

impl SolveResult {
    pub fn empty(status: SolveStatus) -> Self {
        SolveResult {
            status,
            objective: None,
            bound: None,
            gap: None,
            dispatch: Vec::new(),
            theta: Vec::new(),
            flows: Vec::new(),
            decisions: Vec::new(),
            islands: 0,
            nodes: 0,
            wall_time_s: 0.0,
        }
    }

    pub fn has_solution(&self) -> bool {
        self.objective.is_some()
    }
}
