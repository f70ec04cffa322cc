//! Built-in feeders: small systems used across tests and benchmarks, and a
//! 123-bus system approximating the classic IEEE test feeder topology with
//! four voltage regulators, six tie switches, and fourteen PV units.

use super::types::*;
use super::Feeder;

struct Builder {
    name: String,
    base_kva: f64,
    base_kv: f64,
    period_hours: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    ders: Vec<DerUnit>,
    limits: OperatingLimits,
}

impl Builder {
    fn new(name: &str, base_kva: f64, base_kv: f64) -> Builder {
        Builder {
            name: name.to_string(),
            base_kva,
            base_kv,
            period_hours: 1.0,
            buses: Vec::new(),
            branches: Vec::new(),
            ders: Vec::new(),
            limits: OperatingLimits::default(),
        }
    }

    fn bus(&mut self, id: &str, phases: &str, kind: BusKind, monitored: bool) -> BusIdx {
        self.buses.push(Bus {
            id: id.to_string(),
            phases: PhaseSet::parse(phases).expect("valid phases"),
            kind,
            monitored,
        });
        self.buses.len() - 1
    }

    fn find(&self, id: &str) -> BusIdx {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .unwrap_or_else(|| panic!("preset references unknown bus {id}"))
    }

    fn line(&mut self, from: &str, to: &str, phases: &str, z: Impedance, s_max_kva: f64) -> usize {
        let from = self.find(from);
        let to = self.find(to);
        self.branches.push(Branch {
            from,
            to,
            phases: PhaseSet::parse(phases).expect("valid phases"),
            impedance: z,
            s_max: s_max_kva / self.base_kva,
            switchable: false,
            oltc: None,
            initial_closed: true,
        });
        self.branches.len() - 1
    }

    fn switch(&mut self, from: &str, to: &str, phases: &str, z: Impedance, s_max_kva: f64, closed: bool) {
        let i = self.line(from, to, phases, z, s_max_kva);
        self.branches[i].switchable = true;
        self.branches[i].initial_closed = closed;
    }

    fn oltc(&mut self, from: &str, to: &str, phases: &str, z: Impedance, s_max_kva: f64, spec: OltcSpec) {
        let i = self.line(from, to, phases, z, s_max_kva);
        self.branches[i].oltc = Some(spec);
    }

    fn der(&mut self, bus: &str, kva_per_phase: f64) {
        let bus = self.find(bus);
        let mut capacity = [0.0; 3];
        for p in self.buses[bus].phases.iter() {
            capacity[p.index()] = kva_per_phase / self.base_kva;
        }
        self.ders.push(DerUnit { bus, capacity });
    }

    fn build(self) -> Feeder {
        Feeder::assemble(
            self.name,
            self.base_kva,
            self.base_kv,
            self.period_hours,
            self.buses,
            self.branches,
            self.ders,
            self.limits,
        )
    }
}

/// Balanced three-phase series block with equal self terms and equal
/// mutual terms on the given phases.
fn z_block(phases: &str, r_self: f64, x_self: f64, r_mut: f64, x_mut: f64) -> Impedance {
    let set = PhaseSet::parse(phases).expect("valid phases");
    let mut z = Impedance::default();
    for p in set.iter() {
        for q in set.iter() {
            let (i, j) = (p.index(), q.index());
            if i == j {
                z.r[i][j] = r_self;
                z.x[i][j] = x_self;
            } else {
                z.r[i][j] = r_mut;
                z.x[i][j] = x_mut;
            }
        }
    }
    z
}

fn standard_taps() -> OltcSpec {
    OltcSpec {
        tap_ratios: vec![0.95, 0.975, 1.0, 1.025, 1.05],
        max_daily_ops: 4,
        initial_tap: 3,
    }
}

/// One substation bus and nothing else.
pub fn single_bus() -> Feeder {
    let mut b = Builder::new("single", 1000.0, 4.16);
    b.bus("s", "a", BusKind::Substation, false);
    b.build()
}

/// Substation plus one single-phase load bus over one line. No DER, so
/// voltages are fully determined by the scenario.
pub fn two_bus() -> Feeder {
    let mut b = Builder::new("two_bus", 1000.0, 4.16);
    b.bus("s", "a", BusKind::Substation, false);
    b.bus("b1", "a", BusKind::Load, true);
    b.line("s", "b1", "a", z_block("a", 0.02, 0.04, 0.0, 0.0), 500.0);
    b.limits.d1 = 2;
    b.limits.d2 = 1;
    b.build()
}

/// Two-bus stub with a PV unit at the far end, for curtailment tests.
pub fn pv_stub() -> Feeder {
    let mut b = Builder::new("pv_stub", 1000.0, 4.16);
    b.bus("s", "a", BusKind::Substation, false);
    b.bus("b1", "a", BusKind::Load, false);
    b.line("s", "b1", "a", z_block("a", 0.01, 0.02, 0.0, 0.0), 100.0);
    b.der("b1", 300.0);
    b.limits.d1 = 2;
    b.limits.d2 = 1;
    b.build()
}

/// Four-bus single-phase ring: substation, three load buses, one OLTC on
/// the feeder head, two switchable branches forming one loop. Small enough
/// to enumerate every first-stage assignment.
pub fn ring4() -> Feeder {
    let mut b = Builder::new("ring4", 1000.0, 4.16);
    b.bus("s", "a", BusKind::Substation, false);
    b.bus("b1", "a", BusKind::Load, false);
    b.bus("b2", "a", BusKind::Load, true);
    b.bus("b3", "a", BusKind::Load, true);
    b.oltc(
        "s",
        "b1",
        "a",
        z_block("a", 0.01, 0.02, 0.0, 0.0),
        1000.0,
        OltcSpec {
            tap_ratios: vec![0.95, 1.0, 1.05],
            max_daily_ops: 2,
            initial_tap: 2,
        },
    );
    b.line("b1", "b2", "a", z_block("a", 0.02, 0.04, 0.0, 0.0), 500.0);
    b.switch("b2", "b3", "a", z_block("a", 0.02, 0.04, 0.0, 0.0), 500.0, true);
    b.switch("b3", "s", "a", z_block("a", 0.02, 0.04, 0.0, 0.0), 500.0, false);
    b.der("b3", 100.0);
    b.limits.switch_max = 2;
    b.limits.d1 = 2;
    b.limits.d2 = 1;
    b.build()
}

/// Ten-bus mixed-phase feeder: three-phase trunk, two-phase and
/// single-phase laterals, one OLTC, two tie switches, four PV units.
pub fn toy10() -> Feeder {
    let mut b = Builder::new("toy10", 1000.0, 4.16);
    b.bus("s", "abc", BusKind::Substation, false);
    b.bus("t1", "abc", BusKind::Junction, false);
    b.bus("t2", "abc", BusKind::Junction, false);
    b.bus("t3", "abc", BusKind::Junction, false);
    b.bus("la", "ab", BusKind::Load, false);
    b.bus("lb", "ab", BusKind::Load, false);
    b.bus("lc", "c", BusKind::Load, false);
    b.bus("m1", "abc", BusKind::Load, true);
    b.bus("m2", "a", BusKind::Load, true);
    b.bus("e1", "ab", BusKind::Load, false);

    let trunk = z_block("abc", 0.008, 0.016, 0.002, 0.006);
    let lat2 = z_block("ab", 0.012, 0.02, 0.003, 0.006);
    let lat1a = z_block("a", 0.015, 0.025, 0.0, 0.0);
    let lat1c = z_block("c", 0.015, 0.025, 0.0, 0.0);

    b.oltc("s", "t1", "abc", trunk, 3000.0, standard_taps());
    let i = b.line("t1", "t2", "abc", trunk, 2000.0);
    b.branches[i].switchable = true;
    let i = b.line("t2", "t3", "abc", trunk, 2000.0);
    b.branches[i].switchable = true;
    b.line("t1", "la", "ab", lat2, 500.0);
    b.line("t2", "lb", "ab", lat2, 500.0);
    b.line("t3", "lc", "c", lat1c, 500.0);
    b.line("t2", "m1", "abc", trunk, 1000.0);
    b.line("t1", "m2", "a", lat1a, 500.0);
    b.line("la", "e1", "ab", lat2, 500.0);
    b.switch("la", "lb", "ab", lat2, 500.0, false);
    b.switch("m1", "lc", "c", lat1c, 500.0, false);

    b.der("lb", 80.0);
    b.der("m1", 60.0);
    b.der("e1", 50.0);
    b.der("lc", 80.0);
    b.limits.d1 = 3;
    b.limits.d2 = 2;
    b.build()
}

/// Twenty-five-bus feeder used by the desk-scale benchmark protocol:
/// three-phase trunk with mixed laterals, one OLTC, three tie switches,
/// two switchable trunk sections, six PV units, six monitored buses.
pub fn toy25() -> Feeder {
    let mut b = Builder::new("toy25", 1000.0, 4.16);
    b.bus("s", "abc", BusKind::Substation, false);
    for t in 1..=6 {
        b.bus(&format!("t{t}"), "abc", BusKind::Junction, false);
    }
    // Laterals off each trunk section.
    b.bus("a1", "abc", BusKind::Load, true);
    b.bus("a2", "abc", BusKind::Load, false);
    b.bus("b1", "ab", BusKind::Load, false);
    b.bus("b2", "ab", BusKind::Load, true);
    b.bus("c1", "c", BusKind::Load, false);
    b.bus("c2", "c", BusKind::Load, false);
    b.bus("d1", "abc", BusKind::Load, false);
    b.bus("d2", "abc", BusKind::Load, true);
    b.bus("d3", "abc", BusKind::Load, true);
    b.bus("e1", "a", BusKind::Load, false);
    b.bus("e2", "a", BusKind::Load, false);
    b.bus("f1", "abc", BusKind::Load, false);
    b.bus("f2", "abc", BusKind::Load, true);
    b.bus("g1", "bc", BusKind::Load, false);
    b.bus("g2", "bc", BusKind::Load, false);
    b.bus("h1", "abc", BusKind::Load, false);
    b.bus("h2", "abc", BusKind::Load, true);

    let trunk = z_block("abc", 0.03, 0.035, 0.007, 0.012);
    let lat3 = z_block("abc", 0.04, 0.045, 0.008, 0.012);
    let lat2ab = z_block("ab", 0.045, 0.05, 0.01, 0.012);
    let lat2bc = z_block("bc", 0.045, 0.05, 0.01, 0.012);
    let lat1a = z_block("a", 0.05, 0.055, 0.0, 0.0);
    let lat1c = z_block("c", 0.05, 0.055, 0.0, 0.0);

    b.oltc(
        "s",
        "t1",
        "abc",
        trunk,
        4000.0,
        OltcSpec {
            tap_ratios: vec![0.95, 0.975, 1.0, 1.025, 1.05],
            max_daily_ops: 4,
            initial_tap: 4,
        },
    );
    b.line("t1", "t2", "abc", trunk, 3000.0);
    let i = b.line("t2", "t3", "abc", trunk, 3000.0);
    b.branches[i].switchable = true;
    b.line("t3", "t4", "abc", trunk, 2500.0);
    let i = b.line("t4", "t5", "abc", trunk, 2500.0);
    b.branches[i].switchable = true;
    b.line("t5", "t6", "abc", trunk, 2000.0);

    b.line("t1", "a1", "abc", lat3, 1000.0);
    b.line("a1", "a2", "abc", lat3, 800.0);
    b.line("t2", "b1", "ab", lat2ab, 600.0);
    b.line("b1", "b2", "ab", lat2ab, 600.0);
    b.line("t3", "c1", "c", lat1c, 400.0);
    b.line("c1", "c2", "c", lat1c, 400.0);
    b.line("t4", "d1", "abc", lat3, 1200.0);
    b.line("d1", "d2", "abc", lat3, 1000.0);
    b.line("d2", "d3", "abc", lat3, 800.0);
    b.line("t4", "e1", "a", lat1a, 400.0);
    b.line("e1", "e2", "a", lat1a, 400.0);
    b.line("t5", "f1", "abc", lat3, 1000.0);
    b.line("f1", "f2", "abc", lat3, 800.0);
    b.line("t6", "g1", "bc", lat2bc, 600.0);
    b.line("g1", "g2", "bc", lat2bc, 600.0);
    b.line("t6", "h1", "abc", lat3, 1000.0);
    b.line("h1", "h2", "abc", lat3, 800.0);

    // Tie switches, normally open.
    b.switch("a2", "d1", "abc", lat3, 1000.0, false);
    b.switch("d3", "f2", "abc", lat3, 800.0, false);
    b.switch("f2", "h2", "abc", lat3, 800.0, false);

    b.der("a2", 150.0);
    b.der("b2", 100.0);
    b.der("d3", 200.0);
    b.der("e2", 60.0);
    b.der("f2", 200.0);
    b.der("h2", 150.0);
    b.limits.imbalance_eps = 0.04;
    // Stressed voltage bands: a hard ceiling the midday PV rise actually
    // reaches, and a budgeted inner band inside it.
    b.limits.range_b = (0.90 * 0.90, 1.03 * 1.03);
    b.limits.range_a = (0.94 * 0.94, 1.01 * 1.01);
    b.build()
}

/// Line configuration classes for the 123-bus system: phases plus series
/// impedance density per 1000 ft (ohms).
fn cfg(config: u8) -> (&'static str, f64, f64, f64, f64) {
    // (phases, r_self, x_self, r_mut, x_mut) per 1000 ft
    match config {
        1..=6 => ("abc", 0.090, 0.200, 0.030, 0.095),
        7 => ("ac", 0.120, 0.220, 0.035, 0.090),
        8 => ("ab", 0.120, 0.220, 0.035, 0.090),
        9 => ("a", 0.250, 0.250, 0.0, 0.0),
        10 => ("b", 0.250, 0.250, 0.0, 0.0),
        11 => ("c", 0.250, 0.250, 0.0, 0.0),
        12 => ("abc", 0.150, 0.080, 0.050, 0.025),
        _ => unreachable!("unknown config"),
    }
}

/// 123-bus feeder approximating the classic test topology. Substation at
/// bus 150; four OLTC regulators, six normally-open tie switches, fourteen
/// 50-kVA PV systems, monitored buses per the medium-monitoring set.
pub fn ieee123() -> Feeder {
    // (from, to, length ft, config)
    const SEGMENTS: &[(&str, &str, f64, u8)] = &[
        ("1", "2", 175.0, 10),
        ("1", "3", 250.0, 11),
        ("1", "7", 300.0, 1),
        ("3", "4", 200.0, 11),
        ("3", "5", 325.0, 11),
        ("5", "6", 250.0, 11),
        ("7", "8", 200.0, 1),
        ("8", "12", 225.0, 10),
        ("8", "9", 225.0, 9),
        ("8", "13", 300.0, 1),
        ("13", "34", 150.0, 11),
        ("13", "18", 825.0, 2),
        ("14", "11", 250.0, 9),
        ("14", "10", 250.0, 9),
        ("15", "16", 375.0, 11),
        ("15", "17", 350.0, 11),
        ("18", "19", 250.0, 9),
        ("18", "21", 300.0, 2),
        ("19", "20", 325.0, 9),
        ("21", "22", 525.0, 10),
        ("21", "23", 250.0, 2),
        ("23", "24", 550.0, 11),
        ("23", "25", 275.0, 2),
        ("25", "28", 200.0, 2),
        ("26", "27", 275.0, 7),
        ("26", "31", 225.0, 11),
        ("27", "33", 500.0, 9),
        ("28", "29", 300.0, 2),
        ("29", "30", 350.0, 2),
        ("30", "250", 200.0, 2),
        ("31", "32", 300.0, 11),
        ("34", "15", 100.0, 11),
        ("35", "36", 650.0, 8),
        ("35", "40", 250.0, 1),
        ("36", "37", 300.0, 9),
        ("36", "38", 250.0, 10),
        ("38", "39", 325.0, 10),
        ("40", "41", 325.0, 11),
        ("40", "42", 250.0, 1),
        ("42", "43", 500.0, 10),
        ("42", "44", 200.0, 1),
        ("44", "45", 200.0, 9),
        ("44", "47", 250.0, 1),
        ("45", "46", 300.0, 9),
        ("47", "48", 150.0, 4),
        ("47", "49", 250.0, 4),
        ("49", "50", 250.0, 4),
        ("50", "51", 250.0, 4),
        ("52", "53", 200.0, 1),
        ("53", "54", 125.0, 1),
        ("54", "55", 275.0, 1),
        ("54", "57", 350.0, 3),
        ("55", "56", 275.0, 1),
        ("57", "58", 250.0, 10),
        ("57", "60", 750.0, 3),
        ("58", "59", 250.0, 10),
        ("60", "61", 550.0, 5),
        ("60", "62", 250.0, 12),
        ("62", "63", 175.0, 12),
        ("63", "64", 350.0, 12),
        ("64", "65", 425.0, 12),
        ("65", "66", 325.0, 12),
        ("67", "68", 200.0, 9),
        ("67", "72", 275.0, 3),
        ("67", "97", 250.0, 3),
        ("68", "69", 275.0, 9),
        ("69", "70", 325.0, 9),
        ("70", "71", 275.0, 9),
        ("72", "73", 275.0, 11),
        ("72", "76", 200.0, 3),
        ("73", "74", 350.0, 11),
        ("74", "75", 400.0, 11),
        ("76", "77", 400.0, 6),
        ("76", "86", 700.0, 3),
        ("77", "78", 100.0, 6),
        ("78", "79", 225.0, 6),
        ("78", "80", 475.0, 6),
        ("80", "81", 475.0, 6),
        ("81", "82", 250.0, 6),
        ("81", "84", 675.0, 11),
        ("82", "83", 250.0, 6),
        ("84", "85", 475.0, 11),
        ("86", "87", 450.0, 6),
        ("87", "88", 175.0, 9),
        ("87", "89", 275.0, 6),
        ("89", "90", 225.0, 10),
        ("89", "91", 225.0, 6),
        ("91", "92", 300.0, 11),
        ("91", "93", 225.0, 6),
        ("93", "94", 275.0, 9),
        ("93", "95", 300.0, 6),
        ("95", "96", 200.0, 10),
        ("97", "98", 275.0, 3),
        ("98", "99", 550.0, 3),
        ("99", "100", 300.0, 3),
        ("100", "450", 800.0, 3),
        ("101", "102", 225.0, 11),
        ("101", "105", 275.0, 3),
        ("102", "103", 325.0, 11),
        ("103", "104", 700.0, 11),
        ("105", "106", 225.0, 10),
        ("105", "108", 325.0, 3),
        ("106", "107", 575.0, 10),
        ("108", "109", 450.0, 9),
        ("108", "300", 1000.0, 3),
        ("109", "110", 300.0, 9),
        ("110", "111", 575.0, 9),
        ("110", "112", 125.0, 9),
        ("112", "113", 525.0, 9),
        ("113", "114", 325.0, 9),
        ("135", "35", 375.0, 4),
        ("149", "1", 400.0, 1),
        ("152", "52", 400.0, 1),
        ("197", "101", 250.0, 3),
        // Normally-closed sectionalizing connectors.
        ("13", "152", 100.0, 1),
        ("18", "135", 100.0, 2),
        ("60", "160", 100.0, 3),
        ("97", "197", 100.0, 3),
    ];
    // Regulator branches (from, to, phases).
    const REGULATORS: &[(&str, &str, &str)] = &[
        ("150", "149", "abc"),
        ("9", "14", "a"),
        ("25", "26", "ac"),
        ("160", "67", "abc"),
    ];
    // Normally-open tie switches added for reconfiguration.
    const TIES: &[(&str, &str)] = &[
        ("54", "94"),
        ("95", "300"),
        ("66", "111"),
        ("33", "46"),
        ("24", "28"),
        ("78", "86"),
    ];
    const PV_BUSES: [&str; 14] = [
        "33", "39", "46", "51", "56", "64", "66", "75", "83", "88", "94", "96", "104", "114",
    ];
    const MONITORED: [&str; 12] = [
        "39", "66", "75", "83", "85", "94", "96", "114", "149", "160", "300", "450",
    ];

    let base_kva = 1000.0;
    let z_base = 4.16 * 4.16 * 1000.0 / base_kva;

    // Collect node phase sets as the union of incident segment phases.
    let mut ids: Vec<String> = Vec::new();
    let mut phase_of = std::collections::BTreeMap::<String, u8>::new();
    let mut touch = |id: &str, phases: &str, ids: &mut Vec<String>| {
        if !phase_of.contains_key(id) {
            ids.push(id.to_string());
        }
        let mask = phase_of.entry(id.to_string()).or_insert(0);
        *mask |= PhaseSet::parse(phases).unwrap().iter().fold(0u8, |m, p| m | (1 << p.index()));
    };
    touch("150", "abc", &mut ids);
    for (f, t, _, c) in SEGMENTS {
        let (ph, ..) = cfg(*c);
        touch(f, ph, &mut ids);
        touch(t, ph, &mut ids);
    }
    for (f, t, ph) in REGULATORS {
        touch(f, ph, &mut ids);
        touch(t, ph, &mut ids);
    }

    let mut b = Builder::new("ieee123", base_kva, 4.16);
    for id in &ids {
        let mask = phase_of[id];
        let phases: String = "abc"
            .chars()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| c)
            .collect();
        let kind = if id == "150" {
            BusKind::Substation
        } else {
            BusKind::Load
        };
        b.bus(id, &phases, kind, MONITORED.contains(&id.as_str()));
    }

    for (f, t, len, c) in SEGMENTS {
        let (ph, rs, xs, rm, xm) = cfg(*c);
        let scale = len / 1000.0 / z_base;
        let z = z_block(ph, rs * scale, xs * scale, rm * scale, xm * scale);
        b.line(f, t, ph, z, 2000.0);
    }
    for (f, t, ph) in REGULATORS {
        let scale = 50.0 / 1000.0 / z_base;
        let z = z_block(ph, 0.09 * scale, 0.20 * scale, 0.0, 0.0);
        b.oltc(f, t, ph, z, 4000.0, standard_taps());
    }
    for (f, t) in TIES {
        let pf = b.buses[b.find(f)].phases;
        let pt = b.buses[b.find(t)].phases;
        let common: String = ALL_PHASES
            .into_iter()
            .filter(|p| pf.contains(*p) && pt.contains(*p))
            .map(|p| p.letter())
            .collect();
        assert!(!common.is_empty(), "tie {f}-{t} shares no phase");
        let scale = 300.0 / 1000.0 / z_base;
        let z = z_block(&common, 0.09 * scale, 0.20 * scale, 0.03 * scale, 0.095 * scale);
        b.switch(f, t, &common, z, 2000.0, false);
    }
    for pv in PV_BUSES {
        b.der(pv, 50.0);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ieee123_counts() {
        let f = ieee123();
        assert_eq!(f.num_buses(), 123);
        assert_eq!(f.oltc_branches().count(), 4);
        assert_eq!(
            f.switchable_branches()
                .filter(|&i| !f.branches[i].initial_closed)
                .count(),
            6
        );
        assert_eq!(f.ders.len(), 14);
        assert!(f.validate().is_empty(), "{:?}", f.validate());
        // Initially-closed branches form a spanning tree.
        let closed = f.branches.iter().filter(|b| b.initial_closed).count();
        assert_eq!(closed, f.num_buses() - 1);
    }

    #[test]
    fn toys_are_radial_at_start() {
        for f in [two_bus(), ring4(), toy10(), toy25()] {
            assert!(f.validate().is_empty(), "{}: {:?}", f.name, f.validate());
            let closed = f.branches.iter().filter(|b| b.initial_closed).count();
            assert_eq!(closed, f.num_buses() - 1, "{}", f.name);
        }
    }
}
