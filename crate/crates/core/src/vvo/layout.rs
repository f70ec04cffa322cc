//! First-stage decision layout.
//!
//! The same flat encoding of first-stage binaries is shared by the MILP
//! builders, the surrogate's input vector, the training-data generator,
//! and the neural-model embedding: first all switch states for switchable
//! branches (branch-major, then time), then all tap one-hots ordered
//! (branch, time, tap).

use crate::feeder::{BranchIdx, Feeder};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirstStageLayout {
    pub horizon: usize,
    /// `(branch, t)` per switch-state entry.
    pub switch_entries: Vec<(BranchIdx, usize)>,
    /// `(branch, t, tap m in 1..=M)` per tap one-hot entry.
    pub tap_entries: Vec<(BranchIdx, usize, usize)>,
}

impl FirstStageLayout {
    pub fn new(feeder: &Feeder, horizon: usize) -> FirstStageLayout {
        let mut switch_entries = Vec::new();
        for b in feeder.switchable_branches() {
            for t in 0..horizon {
                switch_entries.push((b, t));
            }
        }
        let mut tap_entries = Vec::new();
        for b in feeder.oltc_branches() {
            let m = feeder.branches[b].oltc.as_ref().expect("oltc branch").num_taps();
            for t in 0..horizon {
                for tap in 1..=m {
                    tap_entries.push((b, t, tap));
                }
            }
        }
        FirstStageLayout {
            horizon,
            switch_entries,
            tap_entries,
        }
    }

    /// Total length of the flat encoding.
    pub fn len(&self) -> usize {
        self.switch_entries.len() + self.tap_entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// MILP variable name for each flat slot, in slot order.
    pub fn var_names(&self, feeder: &Feeder) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        for (b, t) in &self.switch_entries {
            names.push(format!("alpha.{}.t{}", feeder.branch_label(*b), t));
        }
        for (b, t, m) in &self.tap_entries {
            names.push(format!("x.{}.m{}.t{}", feeder.branch_label(*b), m, t));
        }
        names
    }

    /// Flatten a decision into the canonical 0/1 vector.
    pub fn encode(&self, decision: &FirstStageDecision) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (b, t) in &self.switch_entries {
            out.push(if decision.closed(*b, *t) { 1.0 } else { 0.0 });
        }
        for (b, t, m) in &self.tap_entries {
            out.push(if decision.tap(*b, *t) == Some(*m) { 1.0 } else { 0.0 });
        }
        out
    }

    /// Rebuild a decision from a flat vector (entries rounded to 0/1).
    /// Non-switchable branches are closed; missing one-hots fall back to
    /// the branch's initial tap.
    pub fn decode(&self, feeder: &Feeder, flat: &[f64]) -> FirstStageDecision {
        assert_eq!(flat.len(), self.len(), "flat vector length mismatch");
        let mut d = FirstStageDecision::all_closed_initial(feeder, self.horizon);
        for (slot, (b, t)) in self.switch_entries.iter().enumerate() {
            d.set_closed(*b, *t, flat[slot] > 0.5);
        }
        for (slot, (b, t, m)) in self.tap_entries.iter().enumerate() {
            if flat[self.switch_entries.len() + slot] > 0.5 {
                d.set_tap(*b, *t, *m);
            }
        }
        d
    }
}

/// Concrete first-stage decision: per-branch closed states and per-OLTC
/// tap positions over the horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstStageDecision {
    /// `closed[branch][t]`, for every branch (fixed branches stay true).
    pub closed: Vec<Vec<bool>>,
    /// `tap[branch][t]` (1-based) for OLTC branches, empty otherwise.
    pub tap: Vec<Vec<usize>>,
}

impl FirstStageDecision {
    /// Everything closed except initially-open switches; taps at their
    /// initial positions.
    pub fn all_closed_initial(feeder: &Feeder, horizon: usize) -> FirstStageDecision {
        let closed = feeder
            .branches
            .iter()
            .map(|br| vec![br.initial_closed || !br.switchable; horizon])
            .collect();
        let tap = feeder
            .branches
            .iter()
            .map(|br| match &br.oltc {
                Some(o) => vec![o.initial_tap; horizon],
                None => Vec::new(),
            })
            .collect();
        FirstStageDecision { closed, tap }
    }

    pub fn horizon(&self) -> usize {
        self.closed.first().map_or(0, Vec::len)
    }

    pub fn closed(&self, branch: BranchIdx, t: usize) -> bool {
        self.closed[branch][t]
    }

    pub fn set_closed(&mut self, branch: BranchIdx, t: usize, closed: bool) {
        self.closed[branch][t] = closed;
    }

    pub fn tap(&self, branch: BranchIdx, t: usize) -> Option<usize> {
        self.tap[branch].get(t).copied()
    }

    pub fn set_tap(&mut self, branch: BranchIdx, t: usize, m: usize) {
        self.tap[branch][t] = m;
    }
}
