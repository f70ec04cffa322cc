//! Solution records and their JSON schema.
//!
//! A [`VvoSolution`] captures everything needed to audit a run offline:
//! the first-stage plan, per-scenario recourse values (voltages, flows,
//! DER dispatch, violation flags), and the objective breakdown. The
//! solver-free checker in [`crate::vvo::verify`] consumes exactly this
//! record.

use crate::feeder::Feeder;
use crate::milp::{MilpModel, SolveResult};
use crate::scenario::ScenarioSet;
use crate::vvo::build::{extract_first_stage, RecourseReader};
use crate::vvo::evaluate::complete_first_stage;
use crate::vvo::layout::FirstStageDecision;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub switching_cost: f64,
    pub oltc_cost: f64,
    pub expected_curtailment_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub branch: String,
    pub closed: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TapPlan {
    pub branch: String,
    pub position: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstStagePlan {
    pub switches: Vec<SwitchPlan>,
    pub taps: Vec<TapPlan>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoltageRecord {
    pub bus: String,
    pub phase: char,
    /// Squared per-unit voltage per period.
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRecord {
    pub branch: String,
    pub phase: char,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerRecord {
    pub bus: String,
    pub phase: char,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Available power per period (the scenario's upper envelope).
    pub available: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub bus: String,
    pub phase: char,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecourseSummary {
    pub probability: f64,
    pub curtailment_cost: f64,
    pub voltages: Vec<VoltageRecord>,
    pub flows: Vec<FlowRecord>,
    pub der: Vec<DerRecord>,
    pub violations: Vec<ViolationRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverInfo {
    pub backend: String,
    pub wall_s: f64,
    pub mip_gap: Option<f64>,
}

/// Extra fields emitted by the neural solve mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeuralInfo {
    /// Rescaled surrogate prediction of the expected recourse cost.
    pub predicted_recourse_cost: f64,
    /// True expected recourse cost of the returned plan.
    pub evaluated_recourse_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VvoSolution {
    pub feeder: String,
    pub mode: String,
    pub status: String,
    pub horizon: usize,
    pub objective: ObjectiveBreakdown,
    pub first_stage: FirstStagePlan,
    pub scenarios: Vec<RecourseSummary>,
    pub solver: SolverInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neural: Option<NeuralInfo>,
}

pub(crate) fn first_stage_plan(feeder: &Feeder, d: &FirstStageDecision) -> FirstStagePlan {
    let switches = feeder
        .switchable_branches()
        .map(|b| SwitchPlan {
            branch: feeder.branch_label(b),
            closed: d.closed[b].clone(),
        })
        .collect();
    let taps = feeder
        .oltc_branches()
        .map(|b| TapPlan {
            branch: feeder.branch_label(b),
            position: d.tap[b].clone(),
        })
        .collect();
    FirstStagePlan { switches, taps }
}

/// Read one scenario's recourse values out of a solved model.
pub(crate) fn recourse_summary(
    feeder: &Feeder,
    model: &MilpModel,
    values: &[f64],
    suffix: &str,
    probability: f64,
    scenario: &crate::scenario::Scenario,
) -> RecourseSummary {
    let horizon = scenario.horizon();
    let reader = RecourseReader {
        feeder,
        model,
        values,
        suffix: suffix.to_string(),
    };
    let mut voltages = Vec::new();
    let mut violations = Vec::new();
    for (i, bus) in feeder.buses.iter().enumerate() {
        for p in bus.phases.iter() {
            let series: Vec<f64> = (0..horizon)
                .map(|t| reader.voltage(i, p, t).unwrap_or(f64::NAN))
                .collect();
            voltages.push(VoltageRecord {
                bus: bus.id.clone(),
                phase: p.letter(),
                series,
            });
            if bus.monitored {
                let flags: Vec<bool> = (0..horizon)
                    .map(|t| reader.violation_flag(i, p, t).unwrap_or(false))
                    .collect();
                violations.push(ViolationRecord {
                    bus: bus.id.clone(),
                    phase: p.letter(),
                    flags,
                });
            }
        }
    }
    let mut flows = Vec::new();
    for (b, br) in feeder.branches.iter().enumerate() {
        for ph in br.phases.iter() {
            flows.push(FlowRecord {
                branch: feeder.branch_label(b),
                phase: ph.letter(),
                p: (0..horizon)
                    .map(|t| reader.flow_p(b, ph, t).unwrap_or(f64::NAN))
                    .collect(),
                q: (0..horizon)
                    .map(|t| reader.flow_q(b, ph, t).unwrap_or(f64::NAN))
                    .collect(),
            });
        }
    }
    let mut der = Vec::new();
    let mut curtailment_cost = 0.0;
    let cost = crate::vvo::build::curtailment_cost_per_pu(feeder);
    for unit in &feeder.ders {
        let bus = &feeder.buses[unit.bus];
        for ph in unit.phases().iter() {
            let p_series: Vec<f64> = (0..horizon)
                .map(|t| reader.der_p(unit.bus, ph, t).unwrap_or(0.0))
                .collect();
            let avail: Vec<f64> = (0..horizon)
                .map(|t| scenario.pg_hat[[unit.bus, ph.index(), t]])
                .collect();
            curtailment_cost += p_series
                .iter()
                .zip(&avail)
                .map(|(p, a)| cost * (a - p))
                .sum::<f64>();
            der.push(DerRecord {
                bus: bus.id.clone(),
                phase: ph.letter(),
                p: p_series,
                q: (0..horizon)
                    .map(|t| reader.der_q(unit.bus, ph, t).unwrap_or(0.0))
                    .collect(),
                available: avail,
            });
        }
    }
    RecourseSummary {
        probability,
        curtailment_cost,
        voltages,
        flows,
        der,
        violations,
    }
}

/// Assemble a full solution record from a solved extensive-form model.
pub fn solution_from_extensive(
    feeder: &Feeder,
    set: &ScenarioSet,
    model: &MilpModel,
    result: &SolveResult,
    mode: &str,
    backend: &str,
) -> Option<VvoSolution> {
    let values = result.assignment.as_ref()?;
    let horizon = set.horizon();
    let decision = extract_first_stage(feeder, model, values, horizon);
    let completion = complete_first_stage(feeder, &decision).ok()?;
    let scenarios: Vec<RecourseSummary> = (0..set.len())
        .map(|s| {
            recourse_summary(
                feeder,
                model,
                values,
                &format!(".s{s}"),
                set.probabilities[s],
                &set.scenarios[s],
            )
        })
        .collect();
    let expected_curtailment: f64 = scenarios
        .iter()
        .map(|r| r.probability * r.curtailment_cost)
        .sum();
    Some(VvoSolution {
        feeder: feeder.name.clone(),
        mode: mode.to_string(),
        status: format!("{:?}", result.status).to_lowercase(),
        horizon,
        objective: ObjectiveBreakdown {
            total: result.objective?,
            switching_cost: completion.switching_cost,
            oltc_cost: completion.oltc_cost,
            expected_curtailment_cost: expected_curtailment,
        },
        first_stage: first_stage_plan(feeder, &decision),
        scenarios,
        solver: SolverInfo {
            backend: backend.to_string(),
            wall_s: result.wall_s,
            mip_gap: result.mip_gap,
        },
        neural: None,
    })
}

/// Assemble a solution record for a fixed first-stage plan by solving one
/// recourse problem per scenario and reading the physics back out. Used by
/// the neural mode (whose MILP carries no recourse block) and by audits.
pub fn solution_from_plan(
    feeder: &Feeder,
    set: &ScenarioSet,
    decision: &crate::vvo::layout::FirstStageDecision,
    backend: &dyn crate::milp::SolverBackend,
    limits: &crate::milp::SolveLimits,
    mode: &str,
) -> Result<VvoSolution, crate::vvo::evaluate::EvalError> {
    use crate::vvo::evaluate::EvalError;
    crate::vvo::evaluate::audit_first_stage(feeder, decision).map_err(EvalError::FirstStage)?;
    let completion = complete_first_stage(feeder, decision).map_err(EvalError::FirstStage)?;
    let horizon = decision.horizon();
    let mut scenarios = Vec::with_capacity(set.len());
    let mut wall_s = 0.0;
    let mut all_optimal = true;
    let solved: Vec<Result<(MilpModel, crate::milp::SolveResult), EvalError>> =
        crate::exec::map_indices(set.len(), |s| {
            let model = crate::vvo::build::build_recourse(feeder, &set.scenarios[s], decision)?;
            let result = backend.solve(&model, limits)?;
            Ok((model, result))
        });
    for (s, item) in solved.into_iter().enumerate() {
        let (model, result) = item?;
        if result.status != crate::milp::SolveStatus::Optimal {
            all_optimal = false;
        }
        wall_s += result.wall_s;
        let values = result
            .assignment
            .as_ref()
            .ok_or_else(|| EvalError::FirstStage(format!("scenario {s} recourse infeasible")))?;
        scenarios.push(recourse_summary(
            feeder,
            &model,
            values,
            "",
            set.probabilities[s],
            &set.scenarios[s],
        ));
    }
    let expected_curtailment: f64 = scenarios
        .iter()
        .map(|r| r.probability * r.curtailment_cost)
        .sum();
    Ok(VvoSolution {
        feeder: feeder.name.clone(),
        mode: mode.to_string(),
        status: if all_optimal { "optimal" } else { "feasible" }.to_string(),
        horizon,
        objective: ObjectiveBreakdown {
            total: completion.cost() + expected_curtailment,
            switching_cost: completion.switching_cost,
            oltc_cost: completion.oltc_cost,
            expected_curtailment_cost: expected_curtailment,
        },
        first_stage: first_stage_plan(feeder, decision),
        scenarios,
        solver: SolverInfo {
            backend: backend.name().to_string(),
            wall_s,
            mip_gap: None,
        },
        neural: None,
    })
}

impl VvoSolution {
    /// Decode the first-stage plan back into a dense decision.
    pub fn decision(&self, feeder: &Feeder) -> FirstStageDecision {
        let mut d = FirstStageDecision::all_closed_initial(feeder, self.horizon);
        for sw in &self.first_stage.switches {
            if let Some(b) = (0..feeder.num_branches()).find(|&b| feeder.branch_label(b) == sw.branch)
            {
                for (t, &c) in sw.closed.iter().enumerate() {
                    d.set_closed(b, t, c);
                }
            }
        }
        for tp in &self.first_stage.taps {
            if let Some(b) = (0..feeder.num_branches()).find(|&b| feeder.branch_label(b) == tp.branch)
            {
                for (t, &m) in tp.position.iter().enumerate() {
                    d.set_tap(b, t, m);
                }
            }
        }
        d
    }
}
