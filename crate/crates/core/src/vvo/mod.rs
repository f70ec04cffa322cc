//! Deterministic, recourse, and extensive-form VVO model construction,
//! plan evaluation, and solution verification.

mod build;
mod evaluate;
mod layout;
mod solution;
mod verify;

pub use build::{
    add_first_stage, add_recourse_block, build_deterministic, build_extensive, build_first_stage,
    build_recourse, curtailment_cost_per_pu, extract_first_stage, BuildError, FirstStageRef,
    FirstStageVars, RecourseReader,
};
pub use evaluate::{
    audit_first_stage, complete_first_stage, evaluate_plan, EvalError, FirstStageCompletion,
    PlanEvaluation,
};
pub use layout::{FirstStageDecision, FirstStageLayout};
pub use solution::{
    solution_from_extensive, solution_from_plan, DerRecord, FirstStagePlan, FlowRecord, NeuralInfo,
    ObjectiveBreakdown, RecourseSummary, SolverInfo, SwitchPlan, TapPlan, ViolationRecord,
    VoltageRecord, VvoSolution,
};
pub use verify::{verify_solution, VerifyIssue};
