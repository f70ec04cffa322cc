//! Solver-agnostic MILP layer: model container, octagon linearization,
//! free-MPS export, assignment checking, and solver backends.

mod model;
mod mps;
mod solve;

pub use model::{
    LinearConstraint, MilpModel, ModelError, OctagonBound, RowViolation, Sense, VarId, VarKind,
    Variable,
};
pub use mps::{export_mps, OBJECTIVE_ROW};
pub use solve::{
    parse_cbc_log_trace, parse_highs_log_trace, HighsBackend, ProcessBackend, SolveError,
    SolveLimits, SolveResult, SolveStatus, SolverBackend, TracePoint, FEASIBILITY_TOL,
    INTEGRALITY_TOL,
};
