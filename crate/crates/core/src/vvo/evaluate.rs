//! First-stage feasibility auditing, minimal-cost completion, and plan
//! evaluation via per-scenario recourse solves.

use crate::exec;
use crate::feeder::Feeder;
use crate::milp::{SolveError, SolveLimits, SolverBackend, FEASIBILITY_TOL, INTEGRALITY_TOL};
use crate::scenario::ScenarioSet;
use crate::vvo::build::{self, BuildError};
use crate::vvo::layout::FirstStageDecision;
use thiserror::Error;

/// Minimal-cost completion of the first-stage auxiliaries for a decision:
/// orientation binaries from a rooted traversal, switching actions from
/// state changes, tap-change counts from tap movements.
#[derive(Debug, Clone)]
pub struct FirstStageCompletion {
    pub switching_cost: f64,
    pub oltc_cost: f64,
    /// `beta_fwd[branch][t]`: from-bus is the parent of to-bus.
    pub beta_fwd: Vec<Vec<bool>>,
    pub beta_rev: Vec<Vec<bool>>,
    /// `gamma[branch][t]` switching actions (switchable branches only).
    pub gamma: Vec<Vec<f64>>,
    /// `rho[branch][t]` tap changes (OLTC branches only).
    pub rho: Vec<Vec<f64>>,
    /// Connectivity-commodity flow per branch and period: the size of the
    /// subtree fed through the branch, signed along from-to orientation.
    pub conn_flow: Vec<Vec<f64>>,
}

impl FirstStageCompletion {
    pub fn cost(&self) -> f64 {
        self.switching_cost + self.oltc_cost
    }
}

/// Check a decision against the first-stage constraint set by direct
/// combinatorial arguments and produce the cheapest auxiliary completion.
pub fn complete_first_stage(
    feeder: &Feeder,
    d: &FirstStageDecision,
) -> Result<FirstStageCompletion, String> {
    let horizon = d.horizon();
    if horizon == 0 {
        return Err("decision has an empty horizon".into());
    }
    let nb = feeder.num_branches();
    if d.closed.len() != nb {
        return Err(format!(
            "decision covers {} branches, feeder has {nb}",
            d.closed.len()
        ));
    }
    let n_tree = feeder.num_buses() - feeder.num_substations();

    let mut beta_fwd = vec![vec![false; horizon]; nb];
    let mut beta_rev = vec![vec![false; horizon]; nb];
    let mut conn_flow = vec![vec![0.0; horizon]; nb];
    for (b, br) in feeder.branches.iter().enumerate() {
        if !br.switchable {
            if let Some(t) = (0..horizon).find(|&t| !d.closed(b, t)) {
                return Err(format!(
                    "non-switchable branch {} opened at t{t}",
                    feeder.branch_label(b)
                ));
            }
        }
    }

    for t in 0..horizon {
        let closed: Vec<usize> = (0..nb).filter(|&b| d.closed(b, t)).collect();
        if closed.len() != n_tree {
            return Err(format!(
                "t{t}: {} closed branches, radiality needs {n_tree}",
                closed.len()
            ));
        }
        // Rooted traversal from the substations over closed branches.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); feeder.num_buses()];
        for &b in &closed {
            let br = &feeder.branches[b];
            adj[br.from].push((br.to, b));
            adj[br.to].push((br.from, b));
        }
        let mut seen = vec![false; feeder.num_buses()];
        let mut parent_edge = vec![usize::MAX; feeder.num_buses()];
        let mut order = Vec::with_capacity(feeder.num_buses());
        let mut stack: Vec<usize> = feeder.substations().collect();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(i) = stack.pop() {
            order.push(i);
            for &(j, b) in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    parent_edge[j] = b;
                    if feeder.branches[b].from == i {
                        beta_fwd[b][t] = true;
                    } else {
                        beta_rev[b][t] = true;
                    }
                    stack.push(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!(
                "t{t}: bus {} disconnected under the chosen switch states",
                feeder.buses[i].id
            ));
        }
        // Subtree sizes bottom-up give the connectivity-commodity flows.
        let mut size = vec![1.0f64; feeder.num_buses()];
        for &i in order.iter().rev() {
            let b = parent_edge[i];
            if b == usize::MAX {
                continue;
            }
            let br = &feeder.branches[b];
            let parent = if beta_fwd[b][t] { br.from } else { br.to };
            size[parent] += size[i];
            conn_flow[b][t] = if beta_fwd[b][t] { size[i] } else { -size[i] };
        }
    }

    let mut gamma = vec![Vec::new(); nb];
    let mut rho = vec![Vec::new(); nb];
    let mut switching_cost = 0.0;
    let mut oltc_cost = 0.0;
    for (b, br) in feeder.branches.iter().enumerate() {
        if br.switchable {
            let mut prev = br.initial_closed;
            let mut count = 0.0;
            for t in 0..horizon {
                let g = if d.closed(b, t) != prev { 1.0 } else { 0.0 };
                gamma[b].push(g);
                count += g;
                prev = d.closed(b, t);
            }
            if count > feeder.limits.switch_max as f64 {
                return Err(format!(
                    "branch {} switches {count} times, limit {}",
                    feeder.branch_label(b),
                    feeder.limits.switch_max
                ));
            }
            switching_cost += feeder.limits.cost_switch * count;
        }
        if let Some(oltc) = &br.oltc {
            let mut prev = oltc.initial_tap as f64;
            let mut count = 0.0;
            for t in 0..horizon {
                let tap = d
                    .tap(b, t)
                    .ok_or_else(|| format!("missing tap for {}", feeder.branch_label(b)))?;
                if tap < 1 || tap > oltc.num_taps() {
                    return Err(format!(
                        "tap {tap} outside 1..={} on {}",
                        oltc.num_taps(),
                        feeder.branch_label(b)
                    ));
                }
                let r = (tap as f64 - prev).abs();
                rho[b].push(r);
                count += r;
                prev = tap as f64;
            }
            if count > oltc.max_daily_ops as f64 {
                return Err(format!(
                    "OLTC {} moves {count} steps, limit {}",
                    feeder.branch_label(b),
                    oltc.max_daily_ops
                ));
            }
            oltc_cost += feeder.limits.cost_oltc * count;
        }
    }

    Ok(FirstStageCompletion {
        switching_cost,
        oltc_cost,
        beta_fwd,
        beta_rev,
        gamma,
        rho,
        conn_flow,
    })
}

/// Validate a decision through the MILP first-stage subsystem: build the
/// first-stage model, assemble the completed assignment, and run the
/// assignment checker. Complements the combinatorial route in
/// [`complete_first_stage`].
pub fn audit_first_stage(feeder: &Feeder, d: &FirstStageDecision) -> Result<(), String> {
    let completion = complete_first_stage(feeder, d)?;
    let (model, fs) = build::build_first_stage(feeder, d.horizon()).map_err(|e| e.to_string())?;
    let mut values = vec![0.0; model.num_vars()];
    for (b, br) in feeder.branches.iter().enumerate() {
        for t in 0..d.horizon() {
            values[fs.alpha[b][t].0] = if d.closed(b, t) { 1.0 } else { 0.0 };
            values[fs.beta_fwd[b][t].0] = if completion.beta_fwd[b][t] { 1.0 } else { 0.0 };
            values[fs.beta_rev[b][t].0] = if completion.beta_rev[b][t] { 1.0 } else { 0.0 };
            values[fs.conn_flow[b][t].0] = completion.conn_flow[b][t];
        }
        if br.switchable {
            for t in 0..d.horizon() {
                values[fs.gamma[b][t].0] = completion.gamma[b][t];
            }
        }
        if let Some(oltc) = &br.oltc {
            for t in 0..d.horizon() {
                let tap = d.tap(b, t).expect("tap present after completion");
                for m in 1..=oltc.num_taps() {
                    values[fs.x_tap[b][t][m - 1].0] = if m == tap { 1.0 } else { 0.0 };
                }
                values[fs.tau[b][t].0] = tap as f64;
                values[fs.rho[b][t].0] = completion.rho[b][t];
            }
        }
    }
    let mut bad = model.check_assignment(&values, FEASIBILITY_TOL);
    bad.extend(model.check_bounds(&values, FEASIBILITY_TOL, INTEGRALITY_TOL));
    if bad.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "first-stage subsystem violated: {}",
            bad.iter()
                .map(|v| v.constraint.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("first-stage decision rejected: {0}")]
    FirstStage(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Expected cost of a fixed first-stage plan over a scenario set.
#[derive(Debug, Clone)]
pub struct PlanEvaluation {
    pub switching_cost: f64,
    pub oltc_cost: f64,
    /// Per-scenario recourse optimum, or the failure reason.
    pub recourse: Vec<Result<f64, String>>,
    pub probabilities: Vec<f64>,
}

impl PlanEvaluation {
    pub fn first_stage_cost(&self) -> f64 {
        self.switching_cost + self.oltc_cost
    }

    /// Probability-weighted recourse cost; None if any scenario failed.
    pub fn expected_recourse(&self) -> Option<f64> {
        let mut total = 0.0;
        for (q, p) in self.recourse.iter().zip(&self.probabilities) {
            total += p * q.as_ref().ok()?;
        }
        Some(total)
    }

    pub fn total(&self) -> Option<f64> {
        Some(self.first_stage_cost() + self.expected_recourse()?)
    }
}

/// Evaluate a first-stage plan: audit it, then solve one recourse problem
/// per scenario (in parallel) and aggregate in scenario order.
pub fn evaluate_plan(
    feeder: &Feeder,
    set: &ScenarioSet,
    decision: &FirstStageDecision,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
) -> Result<PlanEvaluation, EvalError> {
    audit_first_stage(feeder, decision).map_err(EvalError::FirstStage)?;
    let completion = complete_first_stage(feeder, decision).map_err(EvalError::FirstStage)?;
    let recourse = exec::map_indices(set.len(), |s| {
        let model = build::build_recourse(feeder, &set.scenarios[s], decision)
            .map_err(|e| e.to_string())?;
        let result = backend.solve(&model, limits).map_err(|e| e.to_string())?;
        match result.objective {
            Some(q) if result.status.has_solution() => Ok(q),
            _ => Err(format!("scenario {s}: status {:?}", result.status)),
        }
    });
    Ok(PlanEvaluation {
        switching_cost: completion.switching_cost,
        oltc_cost: completion.oltc_cost,
        recourse,
        probabilities: set.probabilities.clone(),
    })
}
