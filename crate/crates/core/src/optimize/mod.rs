//! Periodic-orbit optimization of an isolated subsystem by Hermite-Simpson
//! collocation and an augmented-Lagrangian solver.

pub mod constraints;
pub mod cost;
pub mod layout;
pub mod problem;
pub mod solver;

pub use constraints::{ControlAtCenter, PathConstraint, PhaseAnchor, ResetMap};
pub use cost::CostKind;
pub use layout::{Block, DecisionLayout, Grid, NodeVars, VarRef};
pub use problem::{assemble, solution_to_trajectory, BlockKind, ConstraintBlock, NlpProblem, NodeFix, PostCheck, ProblemSpec};
pub use solver::{solve, NlpFunctions, NlpSolution, SolveStatus, SolverConfig};
