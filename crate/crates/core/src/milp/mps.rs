//! Free-format MPS export.
//!
//! Rows and columns appear in insertion order; every variable gets an
//! explicit objective entry and explicit bound lines, so the document is
//! self-contained regardless of the reader's integer-bound conventions.
//! A nonzero objective constant is encoded as an RHS entry on the
//! objective row with flipped sign, the convention shared by CBC, HiGHS,
//! and Gurobi.

use super::model::{MilpModel, Sense, VarKind};
use std::fmt::Write;

pub const OBJECTIVE_ROW: &str = "OBJ";

/// Render the model as a free-MPS document. Deterministic: identical
/// models produce identical bytes.
pub fn export_mps(model: &MilpModel) -> String {
    let mut out = String::new();
    let name = if model.name.is_empty() {
        "MODEL"
    } else {
        &model.name
    };
    writeln!(out, "NAME {name}").unwrap();

    writeln!(out, "ROWS").unwrap();
    writeln!(out, " N {OBJECTIVE_ROW}").unwrap();
    for c in model.constraints() {
        let tag = match c.sense {
            Sense::Le => 'L',
            Sense::Eq => 'E',
            Sense::Ge => 'G',
        };
        writeln!(out, " {tag} {}", c.name).unwrap();
    }

    // Column-major entries: collect rows touching each variable.
    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (ri, c) in model.constraints().iter().enumerate() {
        for (id, coef) in &c.terms {
            entries[id.0].push((ri, *coef));
        }
    }

    writeln!(out, "COLUMNS").unwrap();
    let mut in_integer = false;
    let mut marker = 0usize;
    for (vi, v) in model.variables().iter().enumerate() {
        let is_int = v.kind != VarKind::Continuous;
        if is_int != in_integer {
            let kind = if is_int { "'INTORG'" } else { "'INTEND'" };
            writeln!(out, " MARKER{marker} 'MARKER' {kind}").unwrap();
            marker += 1;
            in_integer = is_int;
        }
        // Explicit objective entry declares every column.
        writeln!(out, " {} {OBJECTIVE_ROW} {}", v.name, model.objective()[vi]).unwrap();
        for (ri, coef) in &entries[vi] {
            writeln!(out, " {} {} {}", v.name, model.constraints()[*ri].name, coef).unwrap();
        }
    }
    if in_integer {
        writeln!(out, " MARKER{marker} 'MARKER' 'INTEND'").unwrap();
    }

    writeln!(out, "RHS").unwrap();
    if model.objective_constant != 0.0 {
        writeln!(out, " RHS {OBJECTIVE_ROW} {}", -model.objective_constant).unwrap();
    }
    for c in model.constraints() {
        if c.rhs != 0.0 {
            writeln!(out, " RHS {} {}", c.name, c.rhs).unwrap();
        }
    }

    writeln!(out, "BOUNDS").unwrap();
    for v in model.variables() {
        if v.lo == v.hi {
            writeln!(out, " FX BND {} {}", v.name, v.lo).unwrap();
            continue;
        }
        if v.lo.is_finite() {
            writeln!(out, " LO BND {} {}", v.name, v.lo).unwrap();
        } else {
            writeln!(out, " MI BND {}", v.name).unwrap();
        }
        if v.hi.is_finite() {
            writeln!(out, " UP BND {} {}", v.name, v.hi).unwrap();
        } else {
            writeln!(out, " PL BND {}", v.name).unwrap();
        }
    }
    writeln!(out, "ENDATA").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::MilpModel;

    #[test]
    fn empty_model_has_header_sections() {
        let m = MilpModel::new("empty");
        let mps = export_mps(&m);
        for section in ["NAME empty", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
            assert!(mps.contains(section), "missing {section} in:\n{mps}");
        }
    }

    #[test]
    fn single_variable_bound_appears() {
        let mut m = MilpModel::new("lb");
        let x = m.add_continuous("x", 3.0, f64::INFINITY).unwrap();
        m.add_objective_term(x, 1.0);
        let mps = export_mps(&m);
        assert!(mps.contains(" LO BND x 3"), "{mps}");
        assert!(mps.contains(" PL BND x"), "{mps}");
        assert!(mps.contains(" x OBJ 1"), "{mps}");
    }

    #[test]
    fn export_is_deterministic() {
        let build = || {
            let mut m = MilpModel::new("det");
            let x = m.add_continuous("x", 0.0, 2.5).unwrap();
            let b = m.add_binary("b").unwrap();
            m.add_objective_term(x, -1.0);
            m.add_objective_term(b, 0.25);
            m.add_objective_constant(7.5);
            m.add_constraint("c1", vec![(x, 1.0), (b, -2.0)], super::super::model::Sense::Le, 1.5)
                .unwrap();
            export_mps(&m)
        };
        assert_eq!(build(), build());
    }
}
