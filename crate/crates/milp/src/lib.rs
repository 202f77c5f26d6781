//! Mixed-integer linear programming: a bounded-variable revised simplex,
//! best-bound branch and bound, and CPLEX LP-format export.
//!
//! ```
//! use gridsplit_milp::{solve, MilpOptions, MilpProblem, MilpStatus, Relation};
//!
//! let mut p = MilpProblem::new();
//! let a = p.add_binary("a", -5.0);
//! let b = p.add_binary("b", -4.0);
//! p.add_constraint("weight", vec![(a, 3.0), (b, 2.0)], Relation::Le, 4.0);
//! let sol = solve(&p, &MilpOptions::default()).unwrap();
//! assert_eq!(sol.status, MilpStatus::Optimal);
//! assert_eq!(sol.objective, -5.0);
//! ```

mod bnb;
mod error;
mod lp;
mod lpfile;
mod lu;
mod problem;
mod simplex;
mod sparse;

pub use bnb::{
    relative_gap, solve, Branching, MilpOptions, MilpSolution, MilpStatus, NodeEvent, NodeOutcome,
};
pub use error::MilpError;
pub use lp::{lp_solve, LpSolution};
pub use lpfile::{export_lp, parse_lp};
pub use problem::{Constraint, MilpProblem, Relation};
pub use simplex::{Basis, LpStatus, VarStatus};
