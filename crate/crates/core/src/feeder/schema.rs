//! JSON feeder document schema and its translation to [`Feeder`].
//!
//! Schema (all electrical magnitudes in the file are human-facing units;
//! they are converted to per-unit/squared internally):
//!
//! ```json
//! {
//!   "name": "toy",
//!   "base": { "kva": 1000.0, "kv": 4.16, "period_hours": 1.0 },
//!   "impedance_unit": "pu",            // or "ohm"
//!   "buses": [
//!     { "id": "s", "phases": "abc", "kind": "substation", "monitored": false }
//!   ],
//!   "branches": [
//!     { "from": "s", "to": "b1", "phases": "abc",
//!       "impedance": { "aa": {"r": 0.01, "x": 0.02}, "ab": {"r": 0.002, "x": 0.004} },
//!       "s_max_kva": 2000.0, "switchable": false, "initial_closed": true,
//!       "oltc": { "tap_ratios": [0.95, 1.0, 1.05], "max_daily_ops": 4, "initial_tap": 2 } }
//!   ],
//!   "ders": [ { "bus": "b1", "capacity_kva": {"a": 50.0, "b": 50.0} } ],
//!   "limits": {
//!     "u_ref": 1.0,                     // voltage magnitude, p.u.
//!     "range_b": [0.917, 1.058],        // voltage magnitudes, p.u.
//!     "range_a": [0.95, 1.05],
//!     "imbalance_eps": 0.02,
//!     "d1": 8, "d2": 4, "switch_max": 8,
//!     "cost_der_kwh": 120.0, "cost_switch": 100.0, "cost_oltc": 300.0
//!   }
//! }
//! ```
//!
//! Mutual impedance pairs may be given in one direction only; the mirror
//! entry is filled in symmetrically. Bus ids are restricted to
//! `[A-Za-z0-9_]+` so variable and MPS names stay well-formed.

use super::types::*;
use super::Feeder;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("invalid feeder document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error reading feeder: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate bus id {0}")]
    DuplicateBus(String),
    #[error("invalid bus id {0:?} (allowed: [A-Za-z0-9_]+)")]
    BadBusId(String),
    #[error("unknown bus {0}")]
    UnknownBus(String),
    #[error("duplicate branch between {0} and {1}")]
    DuplicateBranch(String, String),
    #[error("branch {0}-{1} carries phases {2} not present at both endpoints")]
    BranchPhaseMismatch(String, String, String),
    #[error("invalid phase set {0:?}")]
    BadPhases(String),
    #[error("impedance entry {pair} on branch {from}-{to} lies outside its phases")]
    ImpedanceOutsidePhases {
        from: String,
        to: String,
        pair: String,
    },
    #[error("DER at bus {0} declares capacity on phase {1} the bus lacks")]
    DerPhaseMismatch(String, char),
    #[error("more than one DER at bus {0}")]
    DuplicateDer(String),
    #[error("base kva/kv must be positive")]
    BadBase,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeederDoc {
    name: String,
    base: BaseDoc,
    #[serde(default = "default_unit")]
    impedance_unit: String,
    buses: Vec<BusDoc>,
    branches: Vec<BranchDoc>,
    #[serde(default)]
    ders: Vec<DerDoc>,
    #[serde(default)]
    limits: LimitsDoc,
}

fn default_unit() -> String {
    "pu".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct BaseDoc {
    kva: f64,
    kv: f64,
    #[serde(default = "default_period_hours")]
    period_hours: f64,
}

fn default_period_hours() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
struct BusDoc {
    id: String,
    phases: String,
    kind: BusKind,
    #[serde(default)]
    monitored: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairDoc {
    r: f64,
    x: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchDoc {
    from: String,
    to: String,
    phases: String,
    #[serde(default)]
    impedance: BTreeMap<String, PairDoc>,
    s_max_kva: f64,
    #[serde(default)]
    switchable: bool,
    #[serde(default = "default_true")]
    initial_closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oltc: Option<OltcDoc>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct OltcDoc {
    tap_ratios: Vec<f64>,
    max_daily_ops: u32,
    initial_tap: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DerDoc {
    bus: String,
    capacity_kva: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LimitsDoc {
    #[serde(default = "default_u_ref")]
    u_ref: f64,
    #[serde(default = "default_range_b")]
    range_b: [f64; 2],
    #[serde(default = "default_range_a")]
    range_a: [f64; 2],
    #[serde(default = "default_eps")]
    imbalance_eps: f64,
    #[serde(default = "default_d1")]
    d1: usize,
    #[serde(default = "default_d2")]
    d2: usize,
    #[serde(default = "default_switch_max")]
    switch_max: u32,
    #[serde(default = "default_cost_der")]
    cost_der_kwh: f64,
    #[serde(default = "default_cost_switch")]
    cost_switch: f64,
    #[serde(default = "default_cost_oltc")]
    cost_oltc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    big_m: Option<f64>,
}

fn default_u_ref() -> f64 {
    1.0
}
fn default_range_b() -> [f64; 2] {
    [0.917, 1.058]
}
fn default_range_a() -> [f64; 2] {
    [0.95, 1.05]
}
fn default_eps() -> f64 {
    0.02
}
fn default_d1() -> usize {
    8
}
fn default_d2() -> usize {
    4
}
fn default_switch_max() -> u32 {
    8
}
fn default_cost_der() -> f64 {
    120.0
}
fn default_cost_switch() -> f64 {
    100.0
}
fn default_cost_oltc() -> f64 {
    300.0
}

impl Default for LimitsDoc {
    fn default() -> Self {
        LimitsDoc {
            u_ref: default_u_ref(),
            range_b: default_range_b(),
            range_a: default_range_a(),
            imbalance_eps: default_eps(),
            d1: default_d1(),
            d2: default_d2(),
            switch_max: default_switch_max(),
            cost_der_kwh: default_cost_der(),
            cost_switch: default_cost_switch(),
            cost_oltc: default_cost_oltc(),
            big_m: None,
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

const PAIR_KEYS: [(&str, usize, usize); 9] = [
    ("aa", 0, 0),
    ("ab", 0, 1),
    ("ac", 0, 2),
    ("ba", 1, 0),
    ("bb", 1, 1),
    ("bc", 1, 2),
    ("ca", 2, 0),
    ("cb", 2, 1),
    ("cc", 2, 2),
];

/// Parse a feeder document from JSON text.
pub fn parse_feeder(text: &str) -> Result<Feeder, FeederError> {
    let doc: FeederDoc = serde_json::from_str(text)?;
    if doc.base.kva <= 0.0 || doc.base.kv <= 0.0 {
        return Err(FeederError::BadBase);
    }
    // z_base in ohms for ohm-to-pu conversion.
    let z_base = doc.base.kv * doc.base.kv * 1000.0 / doc.base.kva;
    let z_scale = match doc.impedance_unit.as_str() {
        "ohm" => 1.0 / z_base,
        _ => 1.0,
    };

    let mut buses = Vec::with_capacity(doc.buses.len());
    let mut index: BTreeMap<String, BusIdx> = BTreeMap::new();
    for b in &doc.buses {
        if !valid_id(&b.id) {
            return Err(FeederError::BadBusId(b.id.clone()));
        }
        if index.contains_key(&b.id) {
            return Err(FeederError::DuplicateBus(b.id.clone()));
        }
        let phases =
            PhaseSet::parse(&b.phases).ok_or_else(|| FeederError::BadPhases(b.phases.clone()))?;
        index.insert(b.id.clone(), buses.len());
        buses.push(Bus {
            id: b.id.clone(),
            phases,
            kind: b.kind,
            monitored: b.monitored,
        });
    }

    let mut seen_pairs: BTreeSet<(BusIdx, BusIdx)> = BTreeSet::new();
    let mut branches = Vec::with_capacity(doc.branches.len());
    for br in &doc.branches {
        let from = *index
            .get(&br.from)
            .ok_or_else(|| FeederError::UnknownBus(br.from.clone()))?;
        let to = *index
            .get(&br.to)
            .ok_or_else(|| FeederError::UnknownBus(br.to.clone()))?;
        let key = (from.min(to), from.max(to));
        if !seen_pairs.insert(key) {
            return Err(FeederError::DuplicateBranch(br.from.clone(), br.to.clone()));
        }
        let phases =
            PhaseSet::parse(&br.phases).ok_or_else(|| FeederError::BadPhases(br.phases.clone()))?;
        if phases.is_empty() {
            return Err(FeederError::BadPhases(br.phases.clone()));
        }
        if !phases.is_subset_of(buses[from].phases) || !phases.is_subset_of(buses[to].phases) {
            return Err(FeederError::BranchPhaseMismatch(
                br.from.clone(),
                br.to.clone(),
                phases.to_string(),
            ));
        }
        let mut z = Impedance::default();
        for (key, pair) in &br.impedance {
            let (_, i, j) = PAIR_KEYS
                .iter()
                .find(|(k, _, _)| k == key)
                .ok_or_else(|| FeederError::BadPhases(key.clone()))?;
            let (pi, pj) = (Phase::from_index(*i), Phase::from_index(*j));
            if !(phases.contains(pi) && phases.contains(pj)) {
                return Err(FeederError::ImpedanceOutsidePhases {
                    from: br.from.clone(),
                    to: br.to.clone(),
                    pair: key.clone(),
                });
            }
            z.r[*i][*j] = pair.r * z_scale;
            z.x[*i][*j] = pair.x * z_scale;
            // Mirror symmetric mutual terms unless given explicitly.
            let mirror = format!(
                "{}{}",
                Phase::from_index(*j).letter(),
                Phase::from_index(*i).letter()
            );
            if i != j && !br.impedance.contains_key(&mirror) {
                z.r[*j][*i] = pair.r * z_scale;
                z.x[*j][*i] = pair.x * z_scale;
            }
        }
        branches.push(Branch {
            from,
            to,
            phases,
            impedance: z,
            s_max: br.s_max_kva / doc.base.kva,
            switchable: br.switchable,
            oltc: br.oltc.as_ref().map(|o| OltcSpec {
                tap_ratios: o.tap_ratios.clone(),
                max_daily_ops: o.max_daily_ops,
                initial_tap: o.initial_tap,
            }),
            initial_closed: br.initial_closed,
        });
    }

    let mut der_buses: BTreeSet<BusIdx> = BTreeSet::new();
    let mut ders = Vec::with_capacity(doc.ders.len());
    for d in &doc.ders {
        let bus = *index
            .get(&d.bus)
            .ok_or_else(|| FeederError::UnknownBus(d.bus.clone()))?;
        if !der_buses.insert(bus) {
            return Err(FeederError::DuplicateDer(d.bus.clone()));
        }
        let mut capacity = [0.0; 3];
        for (ph, kva) in &d.capacity_kva {
            let phase = ph
                .chars()
                .next()
                .and_then(Phase::from_letter)
                .filter(|_| ph.len() == 1)
                .ok_or_else(|| FeederError::BadPhases(ph.clone()))?;
            if !buses[bus].phases.contains(phase) {
                return Err(FeederError::DerPhaseMismatch(d.bus.clone(), phase.letter()));
            }
            capacity[phase.index()] = kva / doc.base.kva;
        }
        ders.push(DerUnit { bus, capacity });
    }

    let l = &doc.limits;
    let limits = OperatingLimits {
        u_ref: l.u_ref * l.u_ref,
        range_b: (l.range_b[0] * l.range_b[0], l.range_b[1] * l.range_b[1]),
        range_a: (l.range_a[0] * l.range_a[0], l.range_a[1] * l.range_a[1]),
        imbalance_eps: l.imbalance_eps,
        d1: l.d1,
        d2: l.d2,
        switch_max: l.switch_max,
        cost_der_kwh: l.cost_der_kwh,
        cost_switch: l.cost_switch,
        cost_oltc: l.cost_oltc,
        big_m: l.big_m,
    };

    Ok(Feeder::assemble(
        doc.name,
        doc.base.kva,
        doc.base.kv,
        doc.base.period_hours,
        buses,
        branches,
        ders,
        limits,
    ))
}

/// Parse a feeder document from a file path.
pub fn parse_feeder_file(path: impl AsRef<Path>) -> Result<Feeder, FeederError> {
    let text = std::fs::read_to_string(path)?;
    parse_feeder(&text)
}

/// Serialize a feeder back to the document schema (used to produce the
/// bundled data files; impedances are emitted in per-unit).
pub fn feeder_to_json(f: &Feeder) -> String {
    let buses = f
        .buses
        .iter()
        .map(|b| BusDoc {
            id: b.id.clone(),
            phases: b.phases.to_string(),
            kind: b.kind,
            monitored: b.monitored,
        })
        .collect();
    let branches = f
        .branches
        .iter()
        .map(|br| {
            let mut imp = BTreeMap::new();
            for (key, i, j) in PAIR_KEYS {
                let (r, x) = (br.impedance.r[i][j], br.impedance.x[i][j]);
                if r != 0.0 || x != 0.0 {
                    imp.insert(key.to_string(), PairDoc { r, x });
                }
            }
            BranchDoc {
                from: f.buses[br.from].id.clone(),
                to: f.buses[br.to].id.clone(),
                phases: br.phases.to_string(),
                impedance: imp,
                s_max_kva: br.s_max * f.base_kva,
                switchable: br.switchable,
                initial_closed: br.initial_closed,
                oltc: br.oltc.as_ref().map(|o| OltcDoc {
                    tap_ratios: o.tap_ratios.clone(),
                    max_daily_ops: o.max_daily_ops,
                    initial_tap: o.initial_tap,
                }),
            }
        })
        .collect();
    let ders = f
        .ders
        .iter()
        .map(|d| DerDoc {
            bus: f.buses[d.bus].id.clone(),
            capacity_kva: d
                .phases()
                .iter()
                .map(|p| (p.letter().to_string(), d.capacity[p.index()] * f.base_kva))
                .collect(),
        })
        .collect();
    let doc = FeederDoc {
        name: f.name.clone(),
        base: BaseDoc {
            kva: f.base_kva,
            kv: f.base_kv,
            period_hours: f.period_hours,
        },
        impedance_unit: "pu".into(),
        buses,
        branches,
        ders,
        limits: LimitsDoc {
            u_ref: f.limits.u_ref.sqrt(),
            range_b: [f.limits.range_b.0.sqrt(), f.limits.range_b.1.sqrt()],
            range_a: [f.limits.range_a.0.sqrt(), f.limits.range_a.1.sqrt()],
            imbalance_eps: f.limits.imbalance_eps,
            d1: f.limits.d1,
            d2: f.limits.d2,
            switch_max: f.limits.switch_max,
            cost_der_kwh: f.limits.cost_der_kwh,
            cost_switch: f.limits.cost_switch,
            cost_oltc: f.limits.cost_oltc,
            big_m: f.limits.big_m,
        },
    };
    serde_json::to_string_pretty(&doc).expect("feeder document serializes")
}
