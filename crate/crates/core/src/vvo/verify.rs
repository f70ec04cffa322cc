//! Solver-free verification of solution records: radiality by edge count
//! and traversal, violation-duration budgets by recount from the voltage
//! series, octagon membership by direct inequality evaluation, and static
//! band plus objective-breakdown checks. None of this touches the MILP.

use crate::feeder::{Feeder, Phase};
use crate::vvo::solution::VvoSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyIssue {
    pub code: &'static str,
    pub message: String,
}

fn issue(code: &'static str, message: String) -> VerifyIssue {
    VerifyIssue { code, message }
}

const TOL: f64 = 1e-6;

/// Recount every structural property of a solution. Empty report means the
/// record is internally consistent and structurally feasible.
pub fn verify_solution(feeder: &Feeder, solution: &VvoSolution) -> Vec<VerifyIssue> {
    let mut out = Vec::new();
    let horizon = solution.horizon;
    let decision = solution.decision(feeder);
    let n_tree = feeder.num_buses() - feeder.num_substations();

    // Radiality: closed count and connectivity per period.
    for t in 0..horizon {
        let closed: Vec<usize> = (0..feeder.num_branches())
            .filter(|&b| decision.closed(b, t))
            .collect();
        if closed.len() != n_tree {
            out.push(issue(
                "radiality-count",
                format!(
                    "t{t}: {} branches closed, spanning forest needs {n_tree}",
                    closed.len()
                ),
            ));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); feeder.num_buses()];
        for &b in &closed {
            let br = &feeder.branches[b];
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut seen = vec![false; feeder.num_buses()];
        let mut stack: Vec<usize> = feeder.substations().collect();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        for (i, s) in seen.iter().enumerate() {
            if !s {
                out.push(issue(
                    "connectivity",
                    format!("t{t}: bus {} unreachable", feeder.buses[i].id),
                ));
            }
        }
    }

    let lim = &feeder.limits;
    for (s, rec) in solution.scenarios.iter().enumerate() {
        // Static Range B recount plus substation pin.
        for v in &rec.voltages {
            let Some(bus) = feeder.bus_index(&v.bus) else {
                out.push(issue("unknown-bus", format!("voltage record for {}", v.bus)));
                continue;
            };
            for (t, &u) in v.series.iter().enumerate() {
                if !u.is_finite() {
                    out.push(issue(
                        "missing-voltage",
                        format!("s{s} {}.{} t{t}", v.bus, v.phase),
                    ));
                    continue;
                }
                if feeder.buses[bus].is_substation() {
                    if (u - lim.u_ref).abs() > TOL {
                        out.push(issue(
                            "substation-pin",
                            format!("s{s} {} t{t}: U = {u:.6}, expected {:.6}", v.bus, lim.u_ref),
                        ));
                    }
                } else if u < lim.range_b.0 - TOL || u > lim.range_b.1 + TOL {
                    out.push(issue(
                        "range-b",
                        format!("s{s} {}.{} t{t}: U = {u:.6} outside Range B", v.bus, v.phase),
                    ));
                }
            }
        }

        // Violation-duration budgets recounted from the voltage series.
        for v in &rec.voltages {
            let Some(bus) = feeder.bus_index(&v.bus) else {
                continue;
            };
            if !feeder.buses[bus].monitored {
                continue;
            }
            let flags: Vec<bool> = v
                .series
                .iter()
                .map(|&u| u < lim.range_a.0 - TOL || u > lim.range_a.1 + TOL)
                .collect();
            let total = flags.iter().filter(|&&f| f).count();
            if total > lim.d1 {
                out.push(issue(
                    "duration-total",
                    format!(
                        "s{s} {}.{}: {total} violation steps exceed d1 = {}",
                        v.bus, v.phase, lim.d1
                    ),
                ));
            }
            if flags.len() > lim.d2 {
                for t in 0..=flags.len() - lim.d2 - 1 {
                    let window = &flags[t..=t + lim.d2];
                    if window.iter().all(|&f| f) {
                        out.push(issue(
                            "duration-window",
                            format!(
                                "s{s} {}.{}: violations span the whole window t{t}..t{}",
                                v.bus,
                                v.phase,
                                t + lim.d2
                            ),
                        ));
                    }
                }
            }
        }

        // Octagon membership for branch flows under the plan's switch states.
        for f in &rec.flows {
            let Some(b) = (0..feeder.num_branches()).find(|&b| feeder.branch_label(b) == f.branch)
            else {
                out.push(issue("unknown-branch", format!("flow record {}", f.branch)));
                continue;
            };
            let s_max = feeder.branches[b].s_max;
            for t in 0..horizon {
                let radius = if decision.closed(b, t) { s_max } else { 0.0 };
                let (p, q) = (f.p[t], f.q[t]);
                if !octagon_member(p, q, radius) {
                    out.push(issue(
                        "thermal-octagon",
                        format!(
                            "s{s} {}.{} t{t}: flow ({p:.6}, {q:.6}) outside radius {radius:.6}",
                            f.branch, f.phase
                        ),
                    ));
                }
            }
        }

        // Octagon membership and availability cap for DER dispatch.
        for d in &rec.der {
            let Some(bus) = feeder.bus_index(&d.bus) else {
                out.push(issue("unknown-bus", format!("DER record for {}", d.bus)));
                continue;
            };
            let Some(unit) = feeder.der_at(bus) else {
                out.push(issue("unknown-der", format!("no DER at {}", d.bus)));
                continue;
            };
            let phase = Phase::from_letter(d.phase).expect("valid phase letter");
            let cap = unit.capacity[phase.index()];
            for t in 0..horizon {
                if !octagon_member(d.p[t], d.q[t], cap) {
                    out.push(issue(
                        "der-octagon",
                        format!(
                            "s{s} {}.{} t{t}: dispatch ({:.6}, {:.6}) outside capacity {cap:.6}",
                            d.bus, d.phase, d.p[t], d.q[t]
                        ),
                    ));
                }
                if d.p[t] < -TOL || d.p[t] > d.available[t] + TOL {
                    out.push(issue(
                        "der-availability",
                        format!(
                            "s{s} {}.{} t{t}: dispatch {:.6} outside [0, {:.6}]",
                            d.bus, d.phase, d.p[t], d.available[t]
                        ),
                    ));
                }
            }
        }
    }

    // Objective breakdown consistency.
    let expected: f64 = solution
        .scenarios
        .iter()
        .map(|r| r.probability * r.curtailment_cost)
        .sum();
    let total = solution.objective.switching_cost + solution.objective.oltc_cost + expected;
    if (total - solution.objective.total).abs() > 1e-6 * (1.0 + solution.objective.total.abs()) {
        out.push(issue(
            "objective-breakdown",
            format!(
                "components sum to {total:.8}, reported total {:.8}",
                solution.objective.total
            ),
        ));
    }

    out
}

/// Membership in the eight-inequality octagon of radius `s`.
fn octagon_member(p: f64, q: f64, s: f64) -> bool {
    let sqrt2 = std::f64::consts::SQRT_2;
    p.abs() <= s + TOL
        && q.abs() <= s + TOL
        && (p + q).abs() <= sqrt2 * s + TOL
        && (p - q).abs() <= sqrt2 * s + TOL
}
