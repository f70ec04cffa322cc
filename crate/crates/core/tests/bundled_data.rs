//! The committed data files parse and carry the documented structure.

use vvo_core::feeder::{parse_feeder_file, BusKind};

fn data(path: &str) -> String {
    format!("{}/../../data/{path}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bundled_ieee123_structure() {
    let f = parse_feeder_file(data("ieee123.json")).unwrap();
    assert_eq!(f.num_buses(), 123);
    assert_eq!(f.oltc_branches().count(), 4, "four voltage regulators");
    let open_ties = f
        .switchable_branches()
        .filter(|&b| !f.branches[b].initial_closed)
        .count();
    assert_eq!(open_ties, 6, "six tie switches");
    assert_eq!(f.ders.len(), 14, "fourteen PV systems");
    assert!(f.validate().is_empty());
    assert_eq!(f.substations().count(), 1);
    assert_eq!(f.bus("0".parse::<usize>().unwrap_or(0)).kind, f.buses[0].kind);
}

#[test]
fn bundled_toys_validate() {
    for name in ["ring4.json", "toy10.json", "toy25.json"] {
        let f = parse_feeder_file(data(name)).unwrap();
        assert!(f.validate().is_empty(), "{name}");
        assert!(f.substations().count() >= 1);
        assert!(f.buses.iter().any(|b| b.kind == BusKind::Load));
    }
}

#[test]
fn bundled_profiles_load() {
    let f = parse_feeder_file(data("toy25.json")).unwrap();
    let p = vvo_core::scenario::load_profiles(&f, 6, data("profiles_toy25.csv")).unwrap();
    assert_eq!(p.horizon(), 6);
    assert!(p.pd_hat.sum() > 0.0);
    assert!(p.pg_hat.sum() > 0.0);
}
