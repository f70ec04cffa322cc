//! VVO MILP construction.
//!
//! The first-stage block carries switch states, tap selections, and their
//! bookkeeping (orientation, switching counts, tap-change counts) plus the
//! radiality/connectivity rows. A recourse block carries one scenario's
//! power-flow physics: balance, three-phase LinDistFlow voltage drops with
//! big-M switching, OLTC tap products, DER and thermal octagons, static
//! voltage bands, phase-imbalance rows, and the violation-duration budget.
//!
//! The deterministic model is first stage plus one block; the extensive
//! form is first stage plus one probability-weighted block per scenario;
//! the recourse model is a single block with the first stage frozen to
//! constants.

use crate::feeder::{phase_impedance_matrices, BranchIdx, BusIdx, Feeder, Phase};
use crate::milp::{MilpModel, ModelError, OctagonBound, Sense, VarId, VarKind};
use crate::scenario::{Scenario, ScenarioSet};
use crate::vvo::layout::FirstStageDecision;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("feeder failed validation: {0:?}")]
    InvalidFeeder(Vec<String>),
    #[error("scenario horizon {got} does not match requested horizon {want}")]
    HorizonMismatch { got: usize, want: usize },
    #[error("scenario covers {got} buses, feeder has {want}")]
    BusCountMismatch { got: usize, want: usize },
    #[error("duration budget d2 = {d2} exceeds horizon {horizon}")]
    DurationBudget { d2: usize, horizon: usize },
    #[error("scenario set is empty")]
    EmptySet,
    #[error("first-stage decision infeasible: {0}")]
    FirstStageInfeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Variable handles for the first-stage block.
#[derive(Debug, Clone)]
pub struct FirstStageVars {
    /// `alpha[branch][t]`; fixed branches carry a [1,1] binary.
    pub alpha: Vec<Vec<VarId>>,
    /// Orientation binaries per branch and period: from-is-parent.
    pub beta_fwd: Vec<Vec<VarId>>,
    pub beta_rev: Vec<Vec<VarId>>,
    /// Switching-action binaries, only for switchable branches.
    pub gamma: Vec<Vec<VarId>>,
    /// Tap one-hots `x[branch][t][m-1]`, only for OLTC branches.
    pub x_tap: Vec<Vec<Vec<VarId>>>,
    /// Tap position and tap-change count, only for OLTC branches.
    pub tau: Vec<Vec<VarId>>,
    pub rho: Vec<Vec<VarId>>,
    /// Connectivity-commodity flow per branch and period.
    pub conn_flow: Vec<Vec<VarId>>,
}

/// How a recourse block refers to the first stage: shared binary variables
/// (deterministic/extensive) or frozen constants (pure recourse).
pub enum FirstStageRef<'a> {
    Vars(&'a FirstStageVars),
    Fixed(&'a FirstStageDecision),
}

fn validate(feeder: &Feeder) -> Result<(), BuildError> {
    let violations = feeder.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(BuildError::InvalidFeeder(
            violations.into_iter().map(|v| v.message).collect(),
        ))
    }
}

fn check_scenario(feeder: &Feeder, sc: &Scenario, horizon: usize) -> Result<(), BuildError> {
    if sc.horizon() != horizon {
        return Err(BuildError::HorizonMismatch {
            got: sc.horizon(),
            want: horizon,
        });
    }
    if sc.num_buses() != feeder.num_buses() {
        return Err(BuildError::BusCountMismatch {
            got: sc.num_buses(),
            want: feeder.num_buses(),
        });
    }
    if feeder.limits.d2 > horizon {
        return Err(BuildError::DurationBudget {
            d2: feeder.limits.d2,
            horizon,
        });
    }
    Ok(())
}

/// Curtailment cost per unit of per-unit power over one period, in $.
pub fn curtailment_cost_per_pu(feeder: &Feeder) -> f64 {
    feeder.limits.cost_der_kwh * feeder.base_kva * feeder.period_hours
}

/// Emit the first-stage block into `model`.
pub fn add_first_stage(
    model: &mut MilpModel,
    feeder: &Feeder,
    horizon: usize,
) -> Result<FirstStageVars, BuildError> {
    let nb = feeder.num_branches();
    let mut fs = FirstStageVars {
        alpha: vec![Vec::new(); nb],
        beta_fwd: vec![Vec::new(); nb],
        beta_rev: vec![Vec::new(); nb],
        gamma: vec![Vec::new(); nb],
        x_tap: vec![Vec::new(); nb],
        tau: vec![Vec::new(); nb],
        rho: vec![Vec::new(); nb],
        conn_flow: vec![Vec::new(); nb],
    };
    let n_tree = (feeder.num_buses() - feeder.num_substations()) as f64;

    for (b, br) in feeder.branches.iter().enumerate() {
        let label = feeder.branch_label(b);
        for t in 0..horizon {
            let name = format!("alpha.{label}.t{t}");
            let alpha = if br.switchable {
                model.add_binary(&name)?
            } else {
                model.add_fixed_binary(&name, true)?
            };
            fs.alpha[b].push(alpha);
            fs.beta_fwd[b].push(model.add_binary(&format!("beta.{label}.f.t{t}"))?);
            fs.beta_rev[b].push(model.add_binary(&format!("beta.{label}.r.t{t}"))?);
            fs.conn_flow[b].push(model.add_continuous(
                &format!("cf.{label}.t{t}"),
                -n_tree,
                n_tree,
            )?);
        }
        if br.switchable {
            for t in 0..horizon {
                fs.gamma[b].push(model.add_binary(&format!("gamma.{label}.t{t}"))?);
            }
        }
        if let Some(oltc) = &br.oltc {
            let m = oltc.num_taps();
            for t in 0..horizon {
                let mut taps = Vec::with_capacity(m);
                for tap in 1..=m {
                    taps.push(model.add_binary(&format!("x.{label}.m{tap}.t{t}"))?);
                }
                fs.x_tap[b].push(taps);
                fs.tau[b].push(model.add_continuous(
                    &format!("tau.{label}.t{t}"),
                    1.0,
                    m as f64,
                )?);
                fs.rho[b].push(model.add_var(
                    &format!("rho.{label}.t{t}"),
                    VarKind::Integer,
                    0.0,
                    (m - 1) as f64,
                )?);
            }
        }
    }

    let tree_size = (feeder.num_buses() - feeder.num_substations()) as f64;
    for t in 0..horizon {
        // Radiality: closed branches form a spanning forest rooted at the
        // substations (one tree per substation).
        let terms = (0..nb).map(|b| (fs.alpha[b][t], 1.0)).collect();
        model.add_constraint(&format!("radial.t{t}"), terms, Sense::Eq, tree_size)?;

        for (b, _) in feeder.branches.iter().enumerate() {
            model.add_constraint(
                &format!("orient.{}.t{t}", feeder.branch_label(b)),
                vec![
                    (fs.beta_fwd[b][t], 1.0),
                    (fs.beta_rev[b][t], 1.0),
                    (fs.alpha[b][t], -1.0),
                ],
                Sense::Eq,
                0.0,
            )?;
        }

        for (i, bus) in feeder.buses.iter().enumerate() {
            // Incoming orientation: beta_fwd of branches arriving at i,
            // beta_rev of branches leaving i.
            let mut terms = Vec::new();
            for (b, br) in feeder.branches.iter().enumerate() {
                if br.to == i {
                    terms.push((fs.beta_fwd[b][t], 1.0));
                }
                if br.from == i {
                    terms.push((fs.beta_rev[b][t], 1.0));
                }
            }
            let rhs = if bus.is_substation() { 0.0 } else { 1.0 };
            model.add_constraint(&format!("parent.{}.t{t}", bus.id), terms, Sense::Eq, rhs)?;
        }

        // Single-commodity connectivity: every non-substation bus absorbs
        // one unit sourced at the substations, and a unit can only ride a
        // closed branch. Parent counting alone admits directed cycles
        // detached from the root; this closes that loophole so the
        // first-stage set is exactly the radial connected configurations.
        for (b, _) in feeder.branches.iter().enumerate() {
            let label = feeder.branch_label(b);
            model.add_constraint(
                &format!("cf.hi.{label}.t{t}"),
                vec![(fs.conn_flow[b][t], 1.0), (fs.alpha[b][t], -n_tree)],
                Sense::Le,
                0.0,
            )?;
            model.add_constraint(
                &format!("cf.lo.{label}.t{t}"),
                vec![(fs.conn_flow[b][t], -1.0), (fs.alpha[b][t], -n_tree)],
                Sense::Le,
                0.0,
            )?;
        }
        for (i, bus) in feeder.buses.iter().enumerate() {
            if bus.is_substation() {
                continue;
            }
            let mut terms = Vec::new();
            for (b, br) in feeder.branches.iter().enumerate() {
                if br.to == i {
                    terms.push((fs.conn_flow[b][t], 1.0));
                }
                if br.from == i {
                    terms.push((fs.conn_flow[b][t], -1.0));
                }
            }
            model.add_constraint(&format!("cbal.{}.t{t}", bus.id), terms, Sense::Eq, 1.0)?;
        }
    }

    for (b, br) in feeder.branches.iter().enumerate() {
        let label = feeder.branch_label(b);
        if br.switchable {
            for t in 0..horizon {
                let (up, down) = (
                    format!("sw.up.{label}.t{t}"),
                    format!("sw.down.{label}.t{t}"),
                );
                if t == 0 {
                    let init = if br.initial_closed { 1.0 } else { 0.0 };
                    model.add_constraint(
                        &up,
                        vec![(fs.alpha[b][0], 1.0), (fs.gamma[b][0], -1.0)],
                        Sense::Le,
                        init,
                    )?;
                    model.add_constraint(
                        &down,
                        vec![(fs.alpha[b][0], -1.0), (fs.gamma[b][0], -1.0)],
                        Sense::Le,
                        -init,
                    )?;
                } else {
                    model.add_constraint(
                        &up,
                        vec![
                            (fs.alpha[b][t], 1.0),
                            (fs.alpha[b][t - 1], -1.0),
                            (fs.gamma[b][t], -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    )?;
                    model.add_constraint(
                        &down,
                        vec![
                            (fs.alpha[b][t], -1.0),
                            (fs.alpha[b][t - 1], 1.0),
                            (fs.gamma[b][t], -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    )?;
                }
                model.add_objective_term(fs.gamma[b][t], feeder.limits.cost_switch);
            }
            let terms = (0..horizon).map(|t| (fs.gamma[b][t], 1.0)).collect();
            model.add_constraint(
                &format!("swmax.{label}"),
                terms,
                Sense::Le,
                feeder.limits.switch_max as f64,
            )?;
        }
        if let Some(oltc) = &br.oltc {
            for t in 0..horizon {
                let mut sos: Vec<(VarId, f64)> =
                    fs.x_tap[b][t].iter().map(|&x| (x, 1.0)).collect();
                model.add_constraint(&format!("sos.{label}.t{t}"), sos.clone(), Sense::Eq, 1.0)?;
                for (mi, term) in sos.iter_mut().enumerate() {
                    term.1 = (mi + 1) as f64;
                }
                sos.push((fs.tau[b][t], -1.0));
                model.add_constraint(&format!("taudef.{label}.t{t}"), sos, Sense::Eq, 0.0)?;

                let (up, down) = (
                    format!("tap.up.{label}.t{t}"),
                    format!("tap.down.{label}.t{t}"),
                );
                if t == 0 {
                    let init = oltc.initial_tap as f64;
                    model.add_constraint(
                        &up,
                        vec![(fs.tau[b][0], 1.0), (fs.rho[b][0], -1.0)],
                        Sense::Le,
                        init,
                    )?;
                    model.add_constraint(
                        &down,
                        vec![(fs.tau[b][0], -1.0), (fs.rho[b][0], -1.0)],
                        Sense::Le,
                        -init,
                    )?;
                } else {
                    model.add_constraint(
                        &up,
                        vec![
                            (fs.tau[b][t], 1.0),
                            (fs.tau[b][t - 1], -1.0),
                            (fs.rho[b][t], -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    )?;
                    model.add_constraint(
                        &down,
                        vec![
                            (fs.tau[b][t], -1.0),
                            (fs.tau[b][t - 1], 1.0),
                            (fs.rho[b][t], -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    )?;
                }
                model.add_objective_term(fs.rho[b][t], feeder.limits.cost_oltc);
            }
            let terms = (0..horizon).map(|t| (fs.rho[b][t], 1.0)).collect();
            model.add_constraint(
                &format!("opmax.{label}"),
                terms,
                Sense::Le,
                oltc.max_daily_ops as f64,
            )?;
        }
    }

    Ok(fs)
}

/// Append one scenario's recourse block. `suffix` distinguishes scenario
/// copies (empty for a single block), `weight` is the scenario probability
/// applied to the curtailment objective.
pub fn add_recourse_block(
    model: &mut MilpModel,
    feeder: &Feeder,
    scenario: &Scenario,
    first_stage: &FirstStageRef,
    suffix: &str,
    weight: f64,
) -> Result<(), BuildError> {
    let horizon = scenario.horizon();
    let lim = &feeder.limits;
    let (u_min, u_max) = lim.range_b;
    let (ra_lo, ra_hi) = lim.range_a;
    let cost = weight * curtailment_cost_per_pu(feeder);

    // Squared-voltage variables.
    let mut u = vec![[None::<VarId>; 3]; feeder.num_buses()];
    for (i, bus) in feeder.buses.iter().enumerate() {
        let (lo, hi) = if bus.is_substation() {
            (lim.u_ref, lim.u_ref)
        } else {
            (u_min, u_max)
        };
        for p in bus.phases.iter() {
            let name = format!("u.{}.{}.t", bus.id, p.letter());
            for t in 0..horizon {
                let v = model.add_continuous(&format!("{name}{t}{suffix}"), lo, hi)?;
                if t == 0 {
                    u[i][p.index()] = Some(v);
                }
            }
        }
    }
    // Recover the full (bus, phase, t) grid of voltage ids by name-free
    // arithmetic: ids were created contiguously per (bus, phase).
    let u_at = |u0: VarId, t: usize| VarId(u0.0 + t);

    // Branch flows.
    let mut fp = vec![[None::<VarId>; 3]; feeder.num_branches()];
    let mut fq = vec![[None::<VarId>; 3]; feeder.num_branches()];
    for (b, br) in feeder.branches.iter().enumerate() {
        let label = feeder.branch_label(b);
        for p in br.phases.iter() {
            for t in 0..horizon {
                let vp = model.add_continuous(
                    &format!("fp.{label}.{}.t{t}{suffix}", p.letter()),
                    -br.s_max,
                    br.s_max,
                )?;
                let vq = model.add_continuous(
                    &format!("fq.{label}.{}.t{t}{suffix}", p.letter()),
                    -br.s_max,
                    br.s_max,
                )?;
                if t == 0 {
                    fp[b][p.index()] = Some(vp);
                    fq[b][p.index()] = Some(vq);
                }
            }
        }
    }
    let flow_at = |f0: VarId, t: usize| VarId(f0.0 + 2 * t);

    // DER dispatch.
    let mut pg = vec![[None::<VarId>; 3]; feeder.num_buses()];
    let mut qg = vec![[None::<VarId>; 3]; feeder.num_buses()];
    for der in &feeder.ders {
        let bus = &feeder.buses[der.bus];
        for p in der.phases().iter() {
            let cap = der.capacity[p.index()];
            for t in 0..horizon {
                let avail = scenario.pg_hat[[der.bus, p.index(), t]];
                let vp = model.add_continuous(
                    &format!("pg.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    0.0,
                    avail.min(cap),
                )?;
                let vq = model.add_continuous(
                    &format!("qg.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    -cap,
                    cap,
                )?;
                if t == 0 {
                    pg[der.bus][p.index()] = Some(vp);
                    qg[der.bus][p.index()] = Some(vq);
                }
                // Curtailment objective: cost * (pg_hat - pg).
                model.add_objective_term(vp, -cost);
                model.add_objective_constant(cost * avail);
            }
        }
    }
    let der_at = |v0: VarId, t: usize| VarId(v0.0 + 2 * t);

    // Nodal balance, per non-substation bus and phase.
    for (j, bus) in feeder.buses.iter().enumerate() {
        if bus.is_substation() {
            continue;
        }
        for p in bus.phases.iter() {
            for t in 0..horizon {
                let mut pterms = Vec::new();
                let mut qterms = Vec::new();
                for (b, br) in feeder.branches.iter().enumerate() {
                    if fp[b][p.index()].is_none() {
                        continue;
                    }
                    let sign = if br.to == j {
                        1.0
                    } else if br.from == j {
                        -1.0
                    } else {
                        continue;
                    };
                    pterms.push((flow_at(fp[b][p.index()].unwrap(), t), sign));
                    qterms.push((flow_at(fq[b][p.index()].unwrap(), t), sign));
                }
                if let Some(v) = pg[j][p.index()] {
                    pterms.push((der_at(v, t), 1.0));
                    qterms.push((der_at(qg[j][p.index()].unwrap(), t), 1.0));
                }
                model.add_constraint(
                    &format!("bal.p.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    pterms,
                    Sense::Eq,
                    scenario.pd_hat[[j, p.index(), t]],
                )?;
                model.add_constraint(
                    &format!("bal.q.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    qterms,
                    Sense::Eq,
                    scenario.qd_hat[[j, p.index(), t]],
                )?;
            }
        }
    }

    // Voltage-drop and OLTC rows per branch.
    for (b, br) in feeder.branches.iter().enumerate() {
        let label = feeder.branch_label(b);
        let (mp, mq) = phase_impedance_matrices(br);

        // OLTC tap product: a dummy squared voltage on the regulated side.
        // Dummy-voltage variables first (keeping them contiguous over t),
        // then the linearization machinery.
        let mut udm = [None::<VarId>; 3];
        if let Some(oltc) = &br.oltc {
            let max_ratio2 = oltc
                .tap_ratios
                .iter()
                .map(|r| r * r)
                .fold(f64::NEG_INFINITY, f64::max);
            for p in br.phases.iter() {
                for t in 0..horizon {
                    let dm = model.add_continuous(
                        &format!("udm.{label}.{}.t{t}{suffix}", p.letter()),
                        0.0,
                        u_max * max_ratio2,
                    )?;
                    if t == 0 {
                        udm[p.index()] = Some(dm);
                    }
                }
            }
            for p in br.phases.iter() {
                for t in 0..horizon {
                    let dm = u_at(udm[p.index()].expect("dummy voltage"), t);
                    let ui = u_at(u[br.from][p.index()].expect("phase at from bus"), t);
                    match first_stage {
                        FirstStageRef::Vars(fs) => {
                            // y_m linearizes u_i * x_m; udm = sum eta_m^2 y_m.
                            let mut udm_terms = vec![(dm, 1.0)];
                            for (mi, ratio) in oltc.tap_ratios.iter().enumerate() {
                                let x = fs.x_tap[b][t][mi];
                                let y = model.add_continuous(
                                    &format!(
                                        "y.{label}.m{}.{}.t{t}{suffix}",
                                        mi + 1,
                                        p.letter()
                                    ),
                                    0.0,
                                    u_max,
                                )?;
                                model.add_constraint(
                                    &format!(
                                        "yind.{label}.m{}.{}.t{t}{suffix}",
                                        mi + 1,
                                        p.letter()
                                    ),
                                    vec![(y, 1.0), (x, -u_max)],
                                    Sense::Le,
                                    0.0,
                                )?;
                                model.add_constraint(
                                    &format!(
                                        "ylo.{label}.m{}.{}.t{t}{suffix}",
                                        mi + 1,
                                        p.letter()
                                    ),
                                    vec![(ui, 1.0), (y, -1.0)],
                                    Sense::Ge,
                                    0.0,
                                )?;
                                model.add_constraint(
                                    &format!(
                                        "yhi.{label}.m{}.{}.t{t}{suffix}",
                                        mi + 1,
                                        p.letter()
                                    ),
                                    vec![(ui, 1.0), (y, -1.0), (x, u_max)],
                                    Sense::Le,
                                    u_max,
                                )?;
                                udm_terms.push((y, -ratio * ratio));
                            }
                            model.add_constraint(
                                &format!("udm.def.{label}.{}.t{t}{suffix}", p.letter()),
                                udm_terms,
                                Sense::Eq,
                                0.0,
                            )?;
                        }
                        FirstStageRef::Fixed(d) => {
                            let m = d.tap(b, t).unwrap_or(oltc.initial_tap);
                            let ratio = oltc.tap_ratios[m - 1];
                            model.add_constraint(
                                &format!("udm.def.{label}.{}.t{t}{suffix}", p.letter()),
                                vec![(dm, 1.0), (ui, -ratio * ratio)],
                                Sense::Eq,
                                0.0,
                            )?;
                        }
                    }
                }
            }
        }

        for p in br.phases.iter() {
            // Row big-M: worst voltage-difference spread plus the largest
            // possible sensitivity contribution of this branch's flows.
            let coef_sum: f64 = br
                .phases
                .iter()
                .map(|q| mp[p.index()][q.index()].abs() + mq[p.index()][q.index()].abs())
                .sum();
            let spread = if br.is_oltc() {
                let oltc = br.oltc.as_ref().expect("oltc");
                let hi2 = oltc.tap_ratios.iter().map(|r| r * r).fold(0.0, f64::max);
                (u_max * hi2 - 0.0).max(u_max - u_min)
            } else {
                u_max - u_min
            };
            let m_row = lim.big_m.unwrap_or(spread + coef_sum * br.s_max);

            for t in 0..horizon {
                let uj = u_at(u[br.to][p.index()].expect("phase at to bus"), t);
                let ui_or_dummy = if br.is_oltc() {
                    u_at(udm[p.index()].expect("dummy voltage"), t)
                } else {
                    u_at(u[br.from][p.index()].expect("phase at from bus"), t)
                };
                let mut base = vec![(uj, 1.0), (ui_or_dummy, -1.0)];
                for q in br.phases.iter() {
                    let cp = mp[p.index()][q.index()];
                    if cp != 0.0 {
                        base.push((flow_at(fp[b][q.index()].unwrap(), t), -cp));
                    }
                    let cq = mq[p.index()][q.index()];
                    if cq != 0.0 {
                        base.push((flow_at(fq[b][q.index()].unwrap(), t), -cq));
                    }
                }
                match first_stage {
                    FirstStageRef::Vars(fs) => {
                        let alpha = fs.alpha[b][t];
                        let mut hi = base.clone();
                        hi.push((alpha, m_row));
                        model.add_constraint(
                            &format!("vd.hi.{label}.{}.t{t}{suffix}", p.letter()),
                            hi,
                            Sense::Le,
                            m_row,
                        )?;
                        let mut lo = base;
                        lo.push((alpha, -m_row));
                        model.add_constraint(
                            &format!("vd.lo.{label}.{}.t{t}{suffix}", p.letter()),
                            lo,
                            Sense::Ge,
                            -m_row,
                        )?;
                    }
                    FirstStageRef::Fixed(d) => {
                        if d.closed(b, t) {
                            model.add_constraint(
                                &format!("vd.eq.{label}.{}.t{t}{suffix}", p.letter()),
                                base,
                                Sense::Eq,
                                0.0,
                            )?;
                        }
                        // Open branch: the drop relation does not apply.
                    }
                }
            }
        }

        // Thermal octagons, per phase and period.
        for p in br.phases.iter() {
            for t in 0..horizon {
                let prefix = format!("th.{label}.{}.t{t}{suffix}", p.letter());
                let bound = match first_stage {
                    FirstStageRef::Vars(fs) => OctagonBound::Scaled(fs.alpha[b][t], br.s_max),
                    FirstStageRef::Fixed(d) => {
                        OctagonBound::Const(if d.closed(b, t) { br.s_max } else { 0.0 })
                    }
                };
                model.add_octagon(
                    &prefix,
                    flow_at(fp[b][p.index()].unwrap(), t),
                    flow_at(fq[b][p.index()].unwrap(), t),
                    bound,
                )?;
            }
        }
    }

    // DER capability octagons.
    for der in &feeder.ders {
        let bus = &feeder.buses[der.bus];
        for p in der.phases().iter() {
            for t in 0..horizon {
                model.add_octagon(
                    &format!("der.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    der_at(pg[der.bus][p.index()].unwrap(), t),
                    der_at(qg[der.bus][p.index()].unwrap(), t),
                    OctagonBound::Const(der.capacity[p.index()]),
                )?;
            }
        }
    }

    // Phase-imbalance rows at three-phase buses.
    let eps = lim.imbalance_eps;
    for (i, bus) in feeder.buses.iter().enumerate() {
        if !bus.is_three_phase() {
            continue;
        }
        for t in 0..horizon {
            let uavg = model.add_continuous(
                &format!("uavg.{}.t{t}{suffix}", bus.id),
                u_min.min(lim.u_ref),
                u_max.max(lim.u_ref),
            )?;
            let mut terms = vec![(uavg, 3.0)];
            for p in bus.phases.iter() {
                terms.push((u_at(u[i][p.index()].unwrap(), t), -1.0));
            }
            model.add_constraint(
                &format!("uavg.def.{}.t{t}{suffix}", bus.id),
                terms,
                Sense::Eq,
                0.0,
            )?;
            for p in bus.phases.iter() {
                let uv = u_at(u[i][p.index()].unwrap(), t);
                model.add_constraint(
                    &format!("imb.hi.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    vec![(uv, 1.0), (uavg, -(1.0 + eps))],
                    Sense::Le,
                    0.0,
                )?;
                model.add_constraint(
                    &format!("imb.lo.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    vec![(uv, -1.0), (uavg, 1.0 - eps)],
                    Sense::Le,
                    0.0,
                )?;
            }
        }
    }

    // Range A violation budget at monitored buses.
    let m_delta = (u_max - ra_hi).max(ra_lo - u_min).max(0.0);
    for (i, bus) in feeder.buses.iter().enumerate() {
        if !bus.monitored {
            continue;
        }
        for p in bus.phases.iter() {
            let mut zv = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let uv = u_at(u[i][p.index()].unwrap(), t);
                let dv = model.add_continuous(
                    &format!("dv.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    0.0,
                    m_delta,
                )?;
                let z = model.add_binary(&format!("zv.{}.{}.t{t}{suffix}", bus.id, p.letter()))?;
                zv.push(z);
                model.add_constraint(
                    &format!("ra.lo.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    vec![(uv, 1.0), (dv, 1.0)],
                    Sense::Ge,
                    ra_lo,
                )?;
                model.add_constraint(
                    &format!("ra.hi.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    vec![(uv, 1.0), (dv, -1.0)],
                    Sense::Le,
                    ra_hi,
                )?;
                model.add_constraint(
                    &format!("ra.ind.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    vec![(dv, 1.0), (z, -m_delta)],
                    Sense::Le,
                    0.0,
                )?;
            }
            let d1_terms = zv.iter().map(|&z| (z, 1.0)).collect();
            model.add_constraint(
                &format!("ra.d1.{}.{}{suffix}", bus.id, p.letter()),
                d1_terms,
                Sense::Le,
                lim.d1 as f64,
            )?;
            // Every window of d2+1 consecutive monitored steps contains a
            // non-violation.
            let d2 = lim.d2;
            for t in 0..horizon.saturating_sub(d2) {
                let terms = (t..=t + d2).map(|k| (zv[k], 1.0)).collect();
                model.add_constraint(
                    &format!("ra.d2.{}.{}.t{t}{suffix}", bus.id, p.letter()),
                    terms,
                    Sense::Le,
                    d2 as f64,
                )?;
            }
        }
    }

    Ok(())
}

/// First-stage-only model (constraints over x and z with the switching and
/// tap-change cost objective); used for perturbation sampling and for
/// first-stage feasibility audits.
pub fn build_first_stage(
    feeder: &Feeder,
    horizon: usize,
) -> Result<(MilpModel, FirstStageVars), BuildError> {
    validate(feeder)?;
    let mut model = MilpModel::new(&format!("{}-first-stage", feeder.name));
    let fs = add_first_stage(&mut model, feeder, horizon)?;
    Ok((model, fs))
}

/// Deterministic VVO: first stage plus a single scenario's recourse.
pub fn build_deterministic(
    feeder: &Feeder,
    scenario: &Scenario,
    horizon: usize,
) -> Result<MilpModel, BuildError> {
    validate(feeder)?;
    check_scenario(feeder, scenario, horizon)?;
    let mut model = MilpModel::new(&format!("{}-vvo", feeder.name));
    let fs = add_first_stage(&mut model, feeder, horizon)?;
    add_recourse_block(
        &mut model,
        feeder,
        scenario,
        &FirstStageRef::Vars(&fs),
        "",
        1.0,
    )?;
    Ok(model)
}

/// Extensive form: one first stage, one weighted recourse block per
/// scenario. Model size grows affinely in the number of scenarios.
pub fn build_extensive(feeder: &Feeder, set: &ScenarioSet) -> Result<MilpModel, BuildError> {
    validate(feeder)?;
    if set.is_empty() {
        return Err(BuildError::EmptySet);
    }
    let horizon = set.horizon();
    for sc in &set.scenarios {
        check_scenario(feeder, sc, horizon)?;
    }
    let mut model = MilpModel::new(&format!("{}-2svvo", feeder.name));
    let fs = add_first_stage(&mut model, feeder, horizon)?;
    for (s, sc) in set.scenarios.iter().enumerate() {
        add_recourse_block(
            &mut model,
            feeder,
            sc,
            &FirstStageRef::Vars(&fs),
            &format!(".s{s}"),
            set.probabilities[s],
        )?;
    }
    Ok(model)
}

/// Recourse problem for a frozen first stage: minimize curtailment cost
/// over one scenario. The first stage must pass the feasibility audit.
pub fn build_recourse(
    feeder: &Feeder,
    scenario: &Scenario,
    decision: &FirstStageDecision,
) -> Result<MilpModel, BuildError> {
    validate(feeder)?;
    let horizon = scenario.horizon();
    check_scenario(feeder, scenario, horizon)?;
    super::evaluate::audit_first_stage(feeder, decision)
        .map_err(BuildError::FirstStageInfeasible)?;
    let mut model = MilpModel::new(&format!("{}-recourse", feeder.name));
    add_recourse_block(
        &mut model,
        feeder,
        scenario,
        &FirstStageRef::Fixed(decision),
        "",
        1.0,
    )?;
    Ok(model)
}

/// Read a first-stage decision back out of a solved model's assignment.
pub fn extract_first_stage(
    feeder: &Feeder,
    model: &MilpModel,
    values: &[f64],
    horizon: usize,
) -> FirstStageDecision {
    let mut d = FirstStageDecision::all_closed_initial(feeder, horizon);
    for (b, br) in feeder.branches.iter().enumerate() {
        let label = feeder.branch_label(b);
        if br.switchable {
            for t in 0..horizon {
                if let Some(id) = model.lookup(&format!("alpha.{label}.t{t}")) {
                    d.set_closed(b, t, values[id.0] > 0.5);
                }
            }
        }
        if let Some(oltc) = &br.oltc {
            for t in 0..horizon {
                for m in 1..=oltc.num_taps() {
                    if let Some(id) = model.lookup(&format!("x.{label}.m{m}.t{t}")) {
                        if values[id.0] > 0.5 {
                            d.set_tap(b, t, m);
                        }
                    }
                }
            }
        }
    }
    d
}

/// Which bus ids a recourse variable grid uses; helper for reading voltage,
/// flow, and dispatch values back out of an assignment.
pub struct RecourseReader<'a> {
    pub feeder: &'a Feeder,
    pub model: &'a MilpModel,
    pub values: &'a [f64],
    pub suffix: String,
}

impl<'a> RecourseReader<'a> {
    pub fn voltage(&self, bus: BusIdx, phase: Phase, t: usize) -> Option<f64> {
        self.read(&format!(
            "u.{}.{}.t{t}{}",
            self.feeder.buses[bus].id,
            phase.letter(),
            self.suffix
        ))
    }

    pub fn flow_p(&self, branch: BranchIdx, phase: Phase, t: usize) -> Option<f64> {
        self.read(&format!(
            "fp.{}.{}.t{t}{}",
            self.feeder.branch_label(branch),
            phase.letter(),
            self.suffix
        ))
    }

    pub fn flow_q(&self, branch: BranchIdx, phase: Phase, t: usize) -> Option<f64> {
        self.read(&format!(
            "fq.{}.{}.t{t}{}",
            self.feeder.branch_label(branch),
            phase.letter(),
            self.suffix
        ))
    }

    pub fn der_p(&self, bus: BusIdx, phase: Phase, t: usize) -> Option<f64> {
        self.read(&format!(
            "pg.{}.{}.t{t}{}",
            self.feeder.buses[bus].id,
            phase.letter(),
            self.suffix
        ))
    }

    pub fn der_q(&self, bus: BusIdx, phase: Phase, t: usize) -> Option<f64> {
        self.read(&format!(
            "qg.{}.{}.t{t}{}",
            self.feeder.buses[bus].id,
            phase.letter(),
            self.suffix
        ))
    }

    pub fn violation_flag(&self, bus: BusIdx, phase: Phase, t: usize) -> Option<bool> {
        self.read(&format!(
            "zv.{}.{}.t{t}{}",
            self.feeder.buses[bus].id,
            phase.letter(),
            self.suffix
        ))
        .map(|v| v > 0.5)
    }

    fn read(&self, name: &str) -> Option<f64> {
        self.model.lookup(name).map(|id| self.values[id.0])
    }
}
