//! Core feeder domain types. All electrical quantities are stored in
//! per-unit on the base declared in the feeder file; voltages are squared
//! magnitudes.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One of the three phases of an unbalanced feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

pub const ALL_PHASES: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

impl Phase {
    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        ALL_PHASES[i]
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn from_letter(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Non-empty subset of `{a, b, c}`, stored as a 3-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const EMPTY: PhaseSet = PhaseSet(0);
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn from_phases(phases: &[Phase]) -> PhaseSet {
        let mut mask = 0u8;
        for p in phases {
            mask |= 1 << p.index();
        }
        PhaseSet(mask)
    }

    /// Parse a string like "abc", "ac", or "b".
    pub fn parse(s: &str) -> Option<PhaseSet> {
        let mut mask = 0u8;
        for c in s.chars() {
            mask |= 1 << Phase::from_letter(c)?.index();
        }
        Some(PhaseSet(mask))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        ALL_PHASES.into_iter().filter(move |p| self.contains(*p))
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

/// Role of a bus in the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Substation,
    Load,
    Junction,
}

/// Index of a bus in `Feeder::buses` (insertion order of the file).
pub type BusIdx = usize;
/// Index of a branch in `Feeder::branches`.
pub type BranchIdx = usize;

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    pub kind: BusKind,
    /// Member of the monitored set for Range A duration constraints.
    pub monitored: bool,
}

impl Bus {
    pub fn is_substation(&self) -> bool {
        self.kind == BusKind::Substation
    }

    /// Three-phase buses are exactly those exposing all of a, b, c.
    pub fn is_three_phase(&self) -> bool {
        self.phases.len() == 3
    }
}

/// 3x3 per-phase-pair series impedance block in per-unit. Entries for
/// phase pairs absent from the branch are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Impedance {
    pub r: [[f64; 3]; 3],
    pub x: [[f64; 3]; 3],
}

impl Impedance {
    pub fn diagonal(r: f64, x: f64, phases: PhaseSet) -> Impedance {
        let mut z = Impedance::default();
        for p in phases.iter() {
            z.r[p.index()][p.index()] = r;
            z.x[p.index()][p.index()] = x;
        }
        z
    }

    /// True if every entry outside `phases x phases` is zero.
    pub fn confined_to(&self, phases: PhaseSet) -> bool {
        for i in 0..3 {
            for j in 0..3 {
                let inside = phases.contains(Phase::from_index(i))
                    && phases.contains(Phase::from_index(j));
                if !inside && (self.r[i][j] != 0.0 || self.x[i][j] != 0.0) {
                    return false;
                }
            }
        }
        true
    }
}

/// On-load tap changer on a branch. Tap indices are 1-based, matching the
/// tap-position variable they define.
#[derive(Debug, Clone, PartialEq)]
pub struct OltcSpec {
    /// Tap ratios, one per position; position m has ratio `tap_ratios[m-1]`.
    pub tap_ratios: Vec<f64>,
    /// Maximum number of tap changes summed over the horizon.
    pub max_daily_ops: u32,
    /// Initial tap position in `1..=tap_ratios.len()`.
    pub initial_tap: usize,
}

impl OltcSpec {
    pub fn num_taps(&self) -> usize {
        self.tap_ratios.len()
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub from: BusIdx,
    pub to: BusIdx,
    pub phases: PhaseSet,
    pub impedance: Impedance,
    /// Thermal capacity in per-unit apparent power, applied per phase.
    pub s_max: f64,
    /// Remotely switchable branch (tie or sectionalizer).
    pub switchable: bool,
    pub oltc: Option<OltcSpec>,
    /// Closed/open state at t = 0.
    pub initial_closed: bool,
}

impl Branch {
    pub fn is_oltc(&self) -> bool {
        self.oltc.is_some()
    }

    /// Branches that are neither switchable nor OLTC-free are held closed;
    /// only switchable branches have a free connection-status variable.
    pub fn status_is_fixed(&self) -> bool {
        !self.switchable
    }
}

/// Distributed energy resource (PV inverter) at a bus, with per-phase
/// apparent-power capacity in per-unit. Zero capacity means the DER does
/// not inject on that phase.
#[derive(Debug, Clone)]
pub struct DerUnit {
    pub bus: BusIdx,
    pub capacity: [f64; 3],
}

impl DerUnit {
    pub fn phases(&self) -> PhaseSet {
        PhaseSet::from_phases(
            &ALL_PHASES
                .into_iter()
                .filter(|p| self.capacity[p.index()] > 0.0)
                .collect::<Vec<_>>(),
        )
    }
}

/// Operating limits and cost coefficients. Voltage quantities are squared
/// per-unit magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingLimits {
    /// Squared substation reference voltage.
    pub u_ref: f64,
    /// Hard static band (Range B), squared.
    pub range_b: (f64, f64),
    /// Monitored band with budgeted violations (Range A), squared.
    pub range_a: (f64, f64),
    /// Maximum per-phase deviation from the bus-average squared voltage.
    pub imbalance_eps: f64,
    /// Budget on total violation steps per monitored bus-phase.
    pub d1: usize,
    /// Budget on consecutive violation steps per monitored bus-phase.
    pub d2: usize,
    /// Maximum switch operations per branch over the horizon.
    pub switch_max: u32,
    /// DER curtailment cost, $ per kWh.
    pub cost_der_kwh: f64,
    /// Switching cost, $ per operation.
    pub cost_switch: f64,
    /// OLTC tap-change cost, $ per tap step.
    pub cost_oltc: f64,
    /// Fallback big-M; per-constraint values are calibrated from the data
    /// and capped by this when present.
    pub big_m: Option<f64>,
}

impl Default for OperatingLimits {
    fn default() -> Self {
        OperatingLimits {
            u_ref: 1.0,
            range_b: (0.917f64.powi(2), 1.058f64.powi(2)),
            range_a: (0.95f64.powi(2), 1.05f64.powi(2)),
            imbalance_eps: 0.02,
            d1: 8,
            d2: 4,
            switch_max: 8,
            cost_der_kwh: 120.0,
            cost_switch: 100.0,
            cost_oltc: 300.0,
            big_m: None,
        }
    }
}
