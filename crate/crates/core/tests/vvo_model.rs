//! Model-physics checks for the VVO builders: LinDistFlow voltage drops,
//! radiality under reconfiguration, recourse identities, and the
//! solution verifier.

use vvo_core::feeder::presets;
use vvo_core::milp::{HighsBackend, SolveLimits, SolveStatus, SolverBackend};
use vvo_core::scenario::{sample_scenarios, Scenario, ScenarioSet};
use vvo_core::vvo::{
    self, build_deterministic, build_extensive, build_recourse, evaluate_plan,
    extract_first_stage, solution_from_extensive, verify_solution, FirstStageDecision,
};

fn backend() -> HighsBackend {
    HighsBackend::default()
}

fn limits() -> SolveLimits {
    SolveLimits::default()
}

#[test]
fn zero_injection_fixed_point() {
    let f = presets::two_bus();
    let sc = Scenario::zeros(f.num_buses(), 2);
    let model = build_deterministic(&f, &sc, 2).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.objective.unwrap().abs() < 1e-9);
    for t in 0..2 {
        let u = r.value(&model, &format!("u.b1.a.t{t}")).unwrap();
        assert!((u - f.limits.u_ref).abs() < 1e-6, "U = {u}");
        let p = r.value(&model, &format!("fp.s-b1.a.t{t}")).unwrap();
        assert!(p.abs() < 1e-6);
    }
}

#[test]
fn single_phase_lindistflow_drop() {
    let f = presets::two_bus();
    let mut sc = Scenario::zeros(f.num_buses(), 1);
    let (p, q) = (0.1, 0.05);
    sc.pd_hat[[1, 0, 0]] = p;
    sc.qd_hat[[1, 0, 0]] = q;
    let model = build_deterministic(&f, &sc, 1).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let br = &f.branches[0];
    let expected = f.limits.u_ref - 2.0 * (br.impedance.r[0][0] * p + br.impedance.x[0][0] * q);
    let u = r.value(&model, "u.b1.a.t0").unwrap();
    assert!((u - expected).abs() < 1e-6, "U = {u}, expected {expected}");
    assert!((r.value(&model, "fp.s-b1.a.t0").unwrap() - p).abs() < 1e-6);
    assert!((r.value(&model, "fq.s-b1.a.t0").unwrap() - q).abs() < 1e-6);
}

#[test]
fn ring_keeps_exactly_n_minus_one_closed() {
    let f = presets::ring4();
    let mut sc = Scenario::zeros(f.num_buses(), 2);
    for t in 0..2 {
        for bus in 1..4 {
            sc.pd_hat[[bus, 0, t]] = 0.05;
            sc.qd_hat[[bus, 0, t]] = 0.02;
        }
    }
    let model = build_deterministic(&f, &sc, 2).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let values = r.assignment.as_ref().unwrap();
    let d = extract_first_stage(&f, &model, values, 2);
    for t in 0..2 {
        let closed = (0..f.num_branches()).filter(|&b| d.closed(b, t)).count();
        assert_eq!(closed, f.num_buses() - 1);
    }
    vvo::audit_first_stage(&f, &d).unwrap();
}

#[test]
fn recourse_zero_uncertainty_costs_nothing() {
    let f = presets::ring4();
    let sc = Scenario::zeros(f.num_buses(), 2);
    let d = FirstStageDecision::all_closed_initial(&f, 2);
    let model = build_recourse(&f, &sc, &d).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.objective.unwrap().abs() < 1e-9);
}

#[test]
fn recourse_rejects_infeasible_first_stage() {
    let f = presets::ring4();
    let sc = Scenario::zeros(f.num_buses(), 2);
    let mut d = FirstStageDecision::all_closed_initial(&f, 2);
    // Close the tie as well: 4 branches closed on 4 buses.
    let tie = f
        .switchable_branches()
        .find(|&b| !f.branches[b].initial_closed)
        .unwrap();
    d.set_closed(tie, 0, true);
    assert!(build_recourse(&f, &sc, &d).is_err());
}

#[test]
fn stub_curtailment_matches_line_capacity() {
    // PV behind an undersized line: dispatch saturates at the thermal
    // octagon radius, the rest is curtailed at the DER cost rate.
    let f = presets::pv_stub();
    let horizon = 3;
    let cap_line = f.branches[0].s_max;
    let mut sc = Scenario::zeros(f.num_buses(), horizon);
    let avail = [0.05, 0.25, 0.30];
    for (t, a) in avail.iter().enumerate() {
        sc.pg_hat[[1, 0, t]] = *a;
    }
    let d = FirstStageDecision::all_closed_initial(&f, horizon);
    let model = build_recourse(&f, &sc, &d).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let coef = vvo::curtailment_cost_per_pu(&f);
    let expected: f64 = avail
        .iter()
        .map(|a| coef * (a - a.min(cap_line)))
        .sum();
    let got = r.objective.unwrap();
    assert!(
        (got - expected).abs() < 1e-6 * (1.0 + expected),
        "Q = {got}, expected {expected}"
    );
}

#[test]
fn recourse_cost_is_nonnegative() {
    let f = presets::toy10();
    let base = vvo_core::scenario::synthetic_profiles(&f, 4, 30.0, 1.0);
    let set = sample_scenarios(&base, 5, 3, 0.2).unwrap();
    let d = FirstStageDecision::all_closed_initial(&f, 4);
    for sc in &set.scenarios {
        let model = build_recourse(&f, sc, &d).unwrap();
        let r = backend().solve(&model, &limits()).unwrap();
        assert!(r.status.has_solution());
        assert!(r.objective.unwrap() >= -1e-9);
    }
}

#[test]
fn extensive_single_scenario_equals_deterministic() {
    let f = presets::ring4();
    let mut sc = Scenario::zeros(f.num_buses(), 2);
    for t in 0..2 {
        sc.pd_hat[[1, 0, t]] = 0.08;
        sc.pd_hat[[2, 0, t]] = 0.06;
        sc.pd_hat[[3, 0, t]] = 0.04;
        sc.qd_hat[[2, 0, t]] = 0.03;
        sc.pg_hat[[3, 0, t]] = 0.06;
    }
    let det = build_deterministic(&f, &sc, 2).unwrap();
    let ext = build_extensive(&f, &ScenarioSet::uniform(vec![sc]).unwrap()).unwrap();
    let rd = backend().solve(&det, &limits()).unwrap();
    let re = backend().solve(&ext, &limits()).unwrap();
    assert_eq!(rd.status, SolveStatus::Optimal);
    assert_eq!(re.status, SolveStatus::Optimal);
    let (a, b) = (rd.objective.unwrap(), re.objective.unwrap());
    assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs())), "{a} vs {b}");
}

#[test]
fn replicated_scenarios_match_single() {
    let f = presets::ring4();
    let mut sc = Scenario::zeros(f.num_buses(), 2);
    for t in 0..2 {
        sc.pd_hat[[1, 0, t]] = 0.1;
        sc.pd_hat[[3, 0, t]] = 0.05;
    }
    let single = build_extensive(&f, &ScenarioSet::uniform(vec![sc.clone()]).unwrap()).unwrap();
    let tripled =
        build_extensive(&f, &ScenarioSet::uniform(vec![sc.clone(), sc.clone(), sc]).unwrap())
            .unwrap();
    let r1 = backend().solve(&single, &limits()).unwrap();
    let r3 = backend().solve(&tripled, &limits()).unwrap();
    let (a, b) = (r1.objective.unwrap(), r3.objective.unwrap());
    assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs())), "{a} vs {b}");
}

#[test]
fn evaluate_plan_decomposes_extensive_optimum() {
    let f = presets::ring4();
    let base = vvo_core::scenario::synthetic_profiles(&f, 2, 60.0, 1.0);
    let set = sample_scenarios(&base, 3, 17, 0.25).unwrap();
    let model = build_extensive(&f, &set).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let d = extract_first_stage(&f, &model, r.assignment.as_ref().unwrap(), 2);
    let eval = evaluate_plan(&f, &set, &d, &backend(), &limits()).unwrap();
    let total = eval.total().expect("all scenarios feasible");
    let obj = r.objective.unwrap();
    assert!(
        (total - obj).abs() <= 1e-6 * (1.0 + obj.abs()),
        "decomposed {total} vs extensive {obj}"
    );
    // Identical scenario -> equal recourse costs.
    let set1 = ScenarioSet::uniform(vec![set.scenarios[0].clone(), set.scenarios[0].clone()])
        .unwrap();
    let eval1 = evaluate_plan(&f, &set1, &d, &backend(), &limits()).unwrap();
    let (q0, q1) = (
        *eval1.recourse[0].as_ref().unwrap(),
        *eval1.recourse[1].as_ref().unwrap(),
    );
    assert!((q0 - q1).abs() < 1e-9);
}

#[test]
fn solver_solution_verifies_clean() {
    let f = presets::toy10();
    let base = vvo_core::scenario::synthetic_profiles(&f, 4, 35.0, 1.0);
    let set = sample_scenarios(&base, 3, 5, 0.2).unwrap();
    let model = build_extensive(&f, &set).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    assert!(r.status.has_solution(), "{:?}", r.status);
    let sol = solution_from_extensive(&f, &set, &model, &r, "exact", "highs").unwrap();
    let issues = verify_solution(&f, &sol);
    assert!(issues.is_empty(), "{issues:?}");
}

#[test]
fn verifier_flags_radiality_violation() {
    let f = presets::ring4();
    let base = vvo_core::scenario::synthetic_profiles(&f, 2, 40.0, 1.0);
    let set = sample_scenarios(&base, 1, 2, 0.0).unwrap();
    let model = build_extensive(&f, &set).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    let mut sol = solution_from_extensive(&f, &set, &model, &r, "exact", "highs").unwrap();
    // Corrupt the plan: close everything.
    for sw in &mut sol.first_stage.switches {
        sw.closed = vec![true; sol.horizon];
    }
    let issues = verify_solution(&f, &sol);
    assert!(issues.iter().any(|i| i.code == "radiality-count"), "{issues:?}");
}

#[test]
fn verifier_flags_duration_budget() {
    let f = presets::toy10();
    let base = vvo_core::scenario::synthetic_profiles(&f, 4, 35.0, 1.0);
    let set = sample_scenarios(&base, 1, 9, 0.0).unwrap();
    let model = build_extensive(&f, &set).unwrap();
    let r = backend().solve(&model, &limits()).unwrap();
    let mut sol = solution_from_extensive(&f, &set, &model, &r, "exact", "highs").unwrap();
    // Force a monitored bus deep under Range A for the whole horizon:
    // with d1 = 3 over T = 4, four violation steps break the budget.
    let monitored = sol.scenarios[0]
        .voltages
        .iter_mut()
        .find(|v| f.bus_index(&v.bus).map(|b| f.buses[b].monitored) == Some(true))
        .unwrap();
    monitored.series = vec![f.limits.range_a.0 - 0.01; sol.horizon];
    let issues = verify_solution(&f, &sol);
    assert!(issues.iter().any(|i| i.code == "duration-total"), "{issues:?}");
}
