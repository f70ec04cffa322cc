//! Feeder data model, ingestion, and validation.
//!
//! A [`Feeder`] is immutable after parsing and safe to share read-only
//! across workers. Buses and branches keep the insertion order of the
//! source document; every downstream model build iterates in that order,
//! which is what makes MPS exports and solution files reproducible.

mod matrices;
pub mod presets;
mod schema;
mod types;

pub use matrices::phase_impedance_matrices;
pub use schema::{feeder_to_json, parse_feeder, parse_feeder_file, FeederError};
pub use types::{
    Branch, BranchIdx, Bus, BusIdx, BusKind, DerUnit, Impedance, OltcSpec, OperatingLimits, Phase,
    PhaseSet, ALL_PHASES,
};

use ndarray::Array2;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Feeder {
    pub name: String,
    /// Apparent-power base in kVA; converts per-unit flows to kW/kvar.
    pub base_kva: f64,
    /// Line-to-line voltage base in kV.
    pub base_kv: f64,
    /// Length of one scheduling period in hours (energy = power x hours).
    pub period_hours: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub ders: Vec<DerUnit>,
    pub limits: OperatingLimits,
    index: BTreeMap<String, BusIdx>,
}

/// A single invariant violation found by [`Feeder::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    fn new(code: &'static str, message: impl Into<String>) -> Violation {
        Violation {
            code,
            message: message.into(),
        }
    }
}

impl Feeder {
    pub(crate) fn assemble(
        name: String,
        base_kva: f64,
        base_kv: f64,
        period_hours: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        ders: Vec<DerUnit>,
        limits: OperatingLimits,
    ) -> Feeder {
        let index = buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        Feeder {
            name,
            base_kva,
            base_kv,
            period_hours,
            buses,
            branches,
            ders,
            limits,
            index,
        }
    }

    pub fn bus_index(&self, id: &str) -> Option<BusIdx> {
        self.index.get(id).copied()
    }

    pub fn bus(&self, i: BusIdx) -> &Bus {
        &self.buses[i]
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn substations(&self) -> impl Iterator<Item = BusIdx> + '_ {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_substation())
            .map(|(i, _)| i)
    }

    pub fn num_substations(&self) -> usize {
        self.substations().count()
    }

    pub fn switchable_branches(&self) -> impl Iterator<Item = BranchIdx> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.switchable)
            .map(|(i, _)| i)
    }

    pub fn oltc_branches(&self) -> impl Iterator<Item = BranchIdx> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_oltc())
            .map(|(i, _)| i)
    }

    /// DER lookup by bus: at most one unit per bus is enforced at parse.
    pub fn der_at(&self, bus: BusIdx) -> Option<&DerUnit> {
        self.ders.iter().find(|d| d.bus == bus)
    }

    /// Short printable branch label `from-to`.
    pub fn branch_label(&self, b: BranchIdx) -> String {
        let br = &self.branches[b];
        format!("{}-{}", self.buses[br.from].id, self.buses[br.to].id)
    }

    /// Branches incident to each bus, in branch order.
    pub fn incidence(&self) -> Vec<Vec<BranchIdx>> {
        let mut inc = vec![Vec::new(); self.buses.len()];
        for (i, br) in self.branches.iter().enumerate() {
            inc[br.from].push(i);
            inc[br.to].push(i);
        }
        inc
    }

    /// Connected components of the all-switches-closed graph; returns the
    /// component id per bus.
    pub fn components_all_closed(&self) -> Vec<usize> {
        let inc = self.incidence();
        let n = self.buses.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(u) = stack.pop() {
                for &bi in &inc[u] {
                    let br = &self.branches[bi];
                    let v = if br.from == u { br.to } else { br.from };
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Symmetric adjacency with self-loops and its diagonal degree matrix,
    /// built with every switch treated as connected.
    pub fn adjacency_with_self_loops(&self) -> (Array2<f64>, Array2<f64>) {
        let n = self.buses.len();
        let mut a = Array2::<f64>::eye(n);
        for br in &self.branches {
            if br.from != br.to {
                a[[br.from, br.to]] = 1.0;
                a[[br.to, br.from]] = 1.0;
            }
        }
        let mut d = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            d[[i, i]] = a.row(i).sum();
        }
        (a, d)
    }

    /// Check all type invariants plus global connectivity. An empty list
    /// means the feeder is fit for model building.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let lim = &self.limits;

        if self.num_substations() == 0 {
            out.push(Violation::new("no-substation", "feeder has no substation bus"));
        }
        if lim.range_a.0 < lim.range_b.0 || lim.range_a.1 > lim.range_b.1 {
            out.push(Violation::new(
                "range-nesting",
                format!(
                    "Range A [{:.4}, {:.4}] must nest inside Range B [{:.4}, {:.4}]",
                    lim.range_a.0, lim.range_a.1, lim.range_b.0, lim.range_b.1
                ),
            ));
        }
        if lim.d2 > lim.d1 {
            out.push(Violation::new(
                "duration-budgets",
                format!("d2 = {} exceeds d1 = {}", lim.d2, lim.d1),
            ));
        }
        if lim.cost_der_kwh < 0.0 || lim.cost_switch < 0.0 || lim.cost_oltc < 0.0 {
            out.push(Violation::new("negative-cost", "cost coefficients must be nonnegative"));
        }
        if !(lim.u_ref > lim.range_b.0 && lim.u_ref < lim.range_b.1) {
            out.push(Violation::new(
                "uref-out-of-band",
                format!("u_ref = {:.4} outside Range B", lim.u_ref),
            ));
        }

        for (i, bus) in self.buses.iter().enumerate() {
            if bus.phases.is_empty() {
                out.push(Violation::new(
                    "empty-phases",
                    format!("bus {} exposes no phases", bus.id),
                ));
            }
            let _ = i;
        }

        for (bi, br) in self.branches.iter().enumerate() {
            let label = self.branch_label(bi);
            if br.s_max <= 0.0 {
                out.push(Violation::new(
                    "nonpositive-smax",
                    format!("branch {label} has s_max <= 0"),
                ));
            }
            if br.switchable && br.is_oltc() {
                out.push(Violation::new(
                    "switchable-oltc",
                    format!("branch {label} is both switchable and an OLTC"),
                ));
            }
            if !br.impedance.confined_to(br.phases) {
                out.push(Violation::new(
                    "impedance-outside-phases",
                    format!("branch {label} has impedance entries on absent phases"),
                ));
            }
            if let Some(oltc) = &br.oltc {
                if oltc.tap_ratios.is_empty() {
                    out.push(Violation::new(
                        "oltc-no-taps",
                        format!("OLTC on branch {label} has no tap positions"),
                    ));
                }
                if oltc.tap_ratios.iter().any(|&r| r <= 0.0) {
                    out.push(Violation::new(
                        "oltc-nonpositive-ratio",
                        format!("OLTC on branch {label} has a nonpositive tap ratio"),
                    ));
                }
                if oltc.initial_tap < 1 || oltc.initial_tap > oltc.num_taps() {
                    out.push(Violation::new(
                        "oltc-initial-tap",
                        format!(
                            "OLTC on branch {label} initial tap {} outside 1..={}",
                            oltc.initial_tap,
                            oltc.num_taps()
                        ),
                    ));
                }
            }
        }

        for der in &self.ders {
            let bus = &self.buses[der.bus];
            if der.phases().is_empty() {
                out.push(Violation::new(
                    "der-no-capacity",
                    format!("DER at bus {} has no positive per-phase capacity", bus.id),
                ));
            }
            if !der.phases().is_subset_of(bus.phases) {
                out.push(Violation::new(
                    "der-phase-mismatch",
                    format!("DER at bus {} has capacity on phases the bus lacks", bus.id),
                ));
            }
        }

        let comp = self.components_all_closed();
        if let Some(sub) = self.substations().next() {
            let root = comp[sub];
            for (i, bus) in self.buses.iter().enumerate() {
                if comp[i] != root {
                    out.push(Violation::new(
                        "unreachable-bus",
                        format!("bus {} is not connected to the substation", bus.id),
                    ));
                }
            }
        }

        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_one_isolated_bus() {
        let f = presets::single_bus();
        let (a, d) = f.adjacency_with_self_loops();
        assert_eq!(a[[0, 0]], 1.0);
        assert_eq!(d[[0, 0]], 1.0);
    }

    #[test]
    fn adjacency_two_bus() {
        let f = presets::two_bus();
        let (a, d) = f.adjacency_with_self_loops();
        assert_eq!(a, ndarray::arr2(&[[1.0, 1.0], [1.0, 1.0]]));
        assert_eq!(d[[0, 0]], 2.0);
        assert_eq!(d[[1, 1]], 2.0);
    }

    #[test]
    fn adjacency_row_sums_are_degree_plus_one() {
        let f = presets::ieee123();
        let (a, _) = f.adjacency_with_self_loops();
        let mut degree = vec![0usize; f.num_buses()];
        for br in &f.branches {
            degree[br.from] += 1;
            degree[br.to] += 1;
        }
        for i in 0..f.num_buses() {
            assert_eq!(a.row(i).sum() as usize, degree[i] + 1, "bus {i}");
        }
    }

    #[test]
    fn adjacency_permutation_equivariant() {
        // Relabeling buses permutes rows/columns identically.
        let f = presets::ring4();
        let (a, _) = f.adjacency_with_self_loops();
        // Reverse bus order by rebuilding the feeder with reversed ids.
        let mut buses: Vec<Bus> = f.buses.clone();
        buses.reverse();
        let n = f.num_buses();
        let remap = |i: usize| n - 1 - i;
        let branches: Vec<Branch> = f
            .branches
            .iter()
            .map(|b| Branch {
                from: remap(b.from),
                to: remap(b.to),
                ..b.clone()
            })
            .collect();
        let ders = f
            .ders
            .iter()
            .map(|d| DerUnit {
                bus: remap(d.bus),
                capacity: d.capacity,
            })
            .collect();
        let g = Feeder::assemble(
            f.name.clone(),
            f.base_kva,
            f.base_kv,
            f.period_hours,
            buses,
            branches,
            ders,
            f.limits.clone(),
        );
        let (b, _) = g.adjacency_with_self_loops();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(a[[i, j]], b[[remap(i), remap(j)]]);
            }
        }
    }

    #[test]
    fn validate_clean_toy() {
        assert!(presets::ring4().validate().is_empty());
        assert!(presets::toy25().validate().is_empty());
    }

    #[test]
    fn validate_range_nesting() {
        let mut f = presets::two_bus();
        f.limits.range_a = (f.limits.range_b.0 - 0.01, f.limits.range_a.1);
        let v = f.validate();
        assert!(v.iter().any(|v| v.code == "range-nesting"), "{v:?}");
    }

    #[test]
    fn validate_disconnected_bus() {
        let mut f = presets::two_bus();
        f.buses.push(Bus {
            id: "orphan".into(),
            phases: PhaseSet::parse("a").unwrap(),
            kind: BusKind::Load,
            monitored: false,
        });
        let g = Feeder::assemble(
            f.name, f.base_kva, f.base_kv, f.period_hours, f.buses, f.branches, f.ders, f.limits,
        );
        let v = g.validate();
        assert!(v.iter().any(|v| v.code == "unreachable-bus"), "{v:?}");
    }
}
