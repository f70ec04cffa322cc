//! Scratch calibration probe for the toy25 benchmark regime.

use std::time::Instant;
use vvo_core::feeder::presets;
use vvo_core::milp::{HighsBackend, SolveLimits, SolverBackend};
use vvo_core::scenario::{sample_scenarios, synthetic_profiles};
use vvo_core::vvo::*;

fn main() {
    let mut f = presets::toy25();
    let horizon: usize = std::env::var("H").ok().and_then(|v| v.parse().ok()).unwrap_or(6);
    let peak = std::env::args()
        .nth(1)
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(30.0);
    let pv = std::env::args()
        .nth(2)
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(1.0);
    if let Some(eps) = std::env::args().nth(3).and_then(|s| s.parse::<f64>().ok()) {
        f.limits.imbalance_eps = eps;
    }
    if let (Some(alo), Some(ahi)) = (
        std::env::args().nth(5).and_then(|s| s.parse::<f64>().ok()),
        std::env::args().nth(6).and_then(|s| s.parse::<f64>().ok()),
    ) {
        f.limits.range_a = (alo * alo, ahi * ahi);
    }
    if let Some(zscale) = std::env::args().nth(4).and_then(|s| s.parse::<f64>().ok()) {
        for br in &mut f.branches {
            for i in 0..3 {
                for j in 0..3 {
                    br.impedance.r[i][j] *= zscale;
                    br.impedance.x[i][j] *= zscale;
                }
            }
        }
    }
    let base = synthetic_profiles(&f, horizon, peak, pv);
    println!(
        "toy25 peak={peak} pv={pv}: total pd {:.3} pu, total pg_hat {:.3} pu",
        base.pd_hat.sum(),
        base.pg_hat.sum()
    );
    let backend = HighsBackend::default();
    let limits = SolveLimits {
        time_limit_s: Some(240.0),
        mip_gap: Some(1e-6),
        capture_trace: false,
    };

    // Deterministic kernel solve.
    let set1 = sample_scenarios(&base, 1, 42, 0.2).unwrap();
    let t0 = Instant::now();
    let det = build_deterministic(&f, &set1.scenarios[0], horizon).unwrap();
    println!(
        "deterministic: {} vars, {} rows",
        det.num_vars(),
        det.num_constraints()
    );
    let rd = backend.solve(&det, &limits).unwrap();
    println!(
        "deterministic solve: {:?} obj {:?} in {:.2}s",
        rd.status,
        rd.objective,
        t0.elapsed().as_secs_f64()
    );
    let d0 = extract_first_stage(&f, &det, rd.assignment.as_ref().unwrap(), horizon);
    let c0 = complete_first_stage(&f, &d0).unwrap();
    println!("kernel plan cost: sw {} oltc {}", c0.switching_cost, c0.oltc_cost);

    // Spread of Q over hand-built plans (does the first stage matter?).
    let set = sample_scenarios(&base, 10, 77, 0.2).unwrap();
    let mut plans: Vec<(String, FirstStageDecision)> = Vec::new();
    plans.push(("default".into(), FirstStageDecision::all_closed_initial(&f, horizon)));
    for tap in [1usize, 2, 4, 5] {
        let mut d = FirstStageDecision::all_closed_initial(&f, horizon);
        let oltc = f.oltc_branches().next().unwrap();
        for t in 0..horizon {
            d.set_tap(oltc, t, tap);
        }
        plans.push((format!("tap{tap}"), d));
    }
    let ties: Vec<usize> = f
        .switchable_branches()
        .filter(|&b| !f.branches[b].initial_closed)
        .collect();
    let closed_sw: Vec<usize> = f
        .switchable_branches()
        .filter(|&b| f.branches[b].initial_closed)
        .collect();
    {
        // Tap schedule: down at midday, up for the evening peak.
        let mut d = FirstStageDecision::all_closed_initial(&f, horizon);
        let oltc = f.oltc_branches().next().unwrap();
        for t in 0..horizon {
            let frac = (t as f64 + 0.5) / horizon as f64;
            let tap = if (0.25..0.6).contains(&frac) { 2 } else { 3 };
            d.set_tap(oltc, t, tap);
        }
        plans.push(("tapsched".into(), d));
    }
    for (ti, &tie) in ties.iter().enumerate() {
        for &sw in &closed_sw {
            let mut d = FirstStageDecision::all_closed_initial(&f, horizon);
            for t in 0..horizon {
                d.set_closed(tie, t, true);
                d.set_closed(sw, t, false);
            }
            if vvo_core::vvo::audit_first_stage(&f, &d).is_ok() {
                plans.push((format!("tie{ti}-open{sw}"), d));
            }
        }
    }
    for (name, d) in &plans {
        let ev = evaluate_plan(&f, &set, d, &backend, &limits).unwrap();
        match ev.expected_recourse() {
            Some(q) => println!("  plan {name}: first-stage {:.0}, Q {:.2}", ev.first_stage_cost(), q),
            None => println!("  plan {name}: some scenario infeasible"),
        }
    }

    // Voltage envelope under the default plan, scenario 0.
    let d0v = FirstStageDecision::all_closed_initial(&f, horizon);
    if let Ok(model) = build_recourse(&f, &set.scenarios[0], &d0v) {
        if let Ok(r) = backend.solve(&model, &limits) {
            if let Some(values) = r.assignment.as_ref() {
                let reader = RecourseReader {
                    feeder: &f,
                    model: &model,
                    values,
                    suffix: String::new(),
                };
                for bus_id in ["t6", "h2", "d3", "a2", "e2"] {
                    let b = f.bus_index(bus_id).unwrap();
                    let series: Vec<String> = (0..horizon)
                        .map(|t| {
                            reader
                                .voltage(b, vvo_core::feeder::Phase::A, t)
                                .map(|u| format!("{:.4}", u.sqrt()))
                                .unwrap_or_else(|| "-".into())
                        })
                        .collect();
                    println!("  |V| at {bus_id}.a: {}", series.join(" "));
                }
                for der in &f.ders {
                    for p in der.phases().iter() {
                        let mut curt = Vec::new();
                        for t in 0..horizon {
                            let avail = set.scenarios[0].pg_hat[[der.bus, p.index(), t]];
                            let got = reader.der_p(der.bus, p, t).unwrap_or(0.0);
                            if avail - got > 1e-6 {
                                curt.push(format!("t{t}:{:.4}", avail - got));
                            }
                        }
                        if !curt.is_empty() {
                            println!(
                                "  curtailed {}.{}: {}",
                                f.buses[der.bus].id,
                                p.letter(),
                                curt.join(" ")
                            );
                            for t in 0..horizon {
                                let pg = reader.der_p(der.bus, p, t).unwrap_or(0.0);
                                let qg = reader.der_q(der.bus, p, t).unwrap_or(0.0);
                                let cap = der.capacity[p.index()];
                                println!(
                                    "    t{t}: pg {pg:.4} qg {qg:.4} cap {cap:.4} |p+q|/s2 {:.3} |p-q|/s2 {:.3}",
                                    (pg + qg).abs() / (1.414 * cap),
                                    (pg - qg).abs() / (1.414 * cap)
                                );
                            }
                        }
                    }
                }
            } else {
                println!("  default-plan recourse has no solution: {:?}", r.status);
            }
        }
    }

    // Extensive with S = 10 and S = 50.
    for s in [10usize, 50] {
        let set = sample_scenarios(&base, s, 7, 0.2).unwrap();
        let t0 = Instant::now();
        let ext = build_extensive(&f, &set).unwrap();
        let build_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let re = backend.solve(&ext, &limits).unwrap();
        println!(
            "extensive S={s}: {} vars {} rows, build {:.2}s solve {:.2}s status {:?} obj {:?} gap {:?}",
            ext.num_vars(),
            ext.num_constraints(),
            build_s,
            t1.elapsed().as_secs_f64(),
            re.status,
            re.objective,
            re.mip_gap,
        );
        let d = extract_first_stage(&f, &ext, re.assignment.as_ref().unwrap(), horizon);
        let c = complete_first_stage(&f, &d).unwrap();
        println!(
            "  plan: sw {} oltc {}, curtailment {:.2}",
            c.switching_cost,
            c.oltc_cost,
            re.objective.unwrap() - c.cost()
        );
        // How much does the default plan lose vs the optimal plan?
        let default = FirstStageDecision::all_closed_initial(&f, horizon);
        let ev = evaluate_plan(&f, &set, &default, &backend, &limits).unwrap();
        match ev.total() {
            Some(tot) => println!(
                "  default plan total {:.2} vs optimum {:.2} (gap {:.2}%)",
                tot,
                re.objective.unwrap(),
                100.0 * (tot - re.objective.unwrap()) / re.objective.unwrap()
            ),
            None => println!("  default plan infeasible in some scenario"),
        }
    }
}
