//! Solver-agnostic MILP container with name-addressable variables.
//!
//! Construction is deterministic: variables, constraints, and objective
//! terms keep insertion order, so the same build sequence always yields the
//! same MPS bytes and the same column order in solver backends.

use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub name: String,
    /// Canonicalized: no duplicate variable, no zero coefficient.
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate variable name {0}")]
    DuplicateName(String),
    #[error("invalid name {0:?} (must be non-empty, no whitespace)")]
    BadName(String),
    #[error("invalid bounds [{lo}, {hi}] for {name}")]
    BadBounds { name: String, lo: f64, hi: f64 },
    #[error("unknown variable id {0} in {1}")]
    UnknownVar(usize, String),
    #[error("octagon bound must scale a binary variable")]
    NonBinaryScale,
    #[error("octagon scale must be positive, got {0}")]
    NonPositiveScale(f64),
}

/// Right-hand bound of an octagon: a constant radius or a binary variable
/// times a positive constant (an indicator-scaled radius).
#[derive(Debug, Clone, Copy)]
pub enum OctagonBound {
    Const(f64),
    Scaled(VarId, f64),
}

#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub name: String,
    variables: Vec<Variable>,
    by_name: HashMap<String, VarId>,
    constraints: Vec<LinearConstraint>,
    /// Dense objective coefficients, indexed by variable.
    objective: Vec<f64>,
    pub objective_constant: f64,
}

/// One violated row reported by [`MilpModel::check_assignment`].
#[derive(Debug, Clone)]
pub struct RowViolation {
    pub constraint: String,
    /// Amount by which the row is violated (always positive).
    pub slack: f64,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(|c| c.is_whitespace())
}

impl MilpModel {
    pub fn new(name: &str) -> MilpModel {
        MilpModel {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn add_var(&mut self, name: &str, kind: VarKind, lo: f64, hi: f64) -> Result<VarId, ModelError> {
        if !valid_name(name) {
            return Err(ModelError::BadName(name.to_string()));
        }
        if self.by_name.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let (lo, hi) = match kind {
            VarKind::Binary => (lo.max(0.0), hi.min(1.0)),
            _ => (lo, hi),
        };
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(ModelError::BadBounds {
                name: name.to_string(),
                lo,
                hi,
            });
        }
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name: name.to_string(),
            kind,
            lo,
            hi,
        });
        self.objective.push(0.0);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_continuous(&mut self, name: &str, lo: f64, hi: f64) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Continuous, lo, hi)
    }

    pub fn add_binary(&mut self, name: &str) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Binary fixed to a constant 0/1 (a decision removed from the search).
    pub fn add_fixed_binary(&mut self, name: &str, value: bool) -> Result<VarId, ModelError> {
        let v = if value { 1.0 } else { 0.0 };
        self.add_var(name, VarKind::Binary, v, v)
    }

    pub fn set_bounds(&mut self, id: VarId, lo: f64, hi: f64) {
        let v = &mut self.variables[id.0];
        v.lo = lo;
        v.hi = hi;
    }

    /// Accumulate an objective coefficient on a variable.
    pub fn add_objective_term(&mut self, id: VarId, coef: f64) {
        self.objective[id.0] += coef;
    }

    /// Drop every objective term and the constant (the constraints stay).
    pub fn clear_objective(&mut self) {
        self.objective.iter_mut().for_each(|c| *c = 0.0);
        self.objective_constant = 0.0;
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective_constant += c;
    }

    /// Add a row; duplicate variables are merged and zero terms dropped.
    pub fn add_constraint(
        &mut self,
        name: &str,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<(), ModelError> {
        if !valid_name(name) {
            return Err(ModelError::BadName(name.to_string()));
        }
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (id, c) in terms {
            if id.0 >= self.variables.len() {
                return Err(ModelError::UnknownVar(id.0, name.to_string()));
            }
            match merged.iter_mut().find(|(j, _)| *j == id) {
                Some((_, acc)) => *acc += c,
                None => merged.push((id, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        self.constraints.push(LinearConstraint {
            name: name.to_string(),
            terms: merged,
            sense,
            rhs,
        });
        Ok(())
    }

    /// Octagonal outer set for a disk `p^2 + q^2 <= s^2`: the eight rows
    /// `|p| <= s`, `|q| <= s`, `|p + q| <= sqrt(2) s`, `|p - q| <= sqrt(2) s`.
    /// The inscribed disk of radius `s` is feasible, and any feasible point
    /// lies within radius `s / cos(pi/8)`.
    pub fn add_octagon(
        &mut self,
        prefix: &str,
        p: VarId,
        q: VarId,
        s: OctagonBound,
    ) -> Result<(), ModelError> {
        if let OctagonBound::Scaled(a, smax) = s {
            if self.variables[a.0].kind != VarKind::Binary {
                return Err(ModelError::NonBinaryScale);
            }
            if smax <= 0.0 {
                return Err(ModelError::NonPositiveScale(smax));
            }
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        // Each entry: (tag, lhs terms over (p, q), multiple of s).
        let rows: [(&str, f64, f64, f64); 8] = [
            ("p.hi", 1.0, 0.0, 1.0),
            ("p.lo", -1.0, 0.0, 1.0),
            ("q.hi", 0.0, 1.0, 1.0),
            ("q.lo", 0.0, -1.0, 1.0),
            ("pq.hi", 1.0, 1.0, sqrt2),
            ("pq.lo", -1.0, -1.0, sqrt2),
            ("pmq.hi", 1.0, -1.0, sqrt2),
            ("pmq.lo", -1.0, 1.0, sqrt2),
        ];
        for (tag, cp, cq, mult) in rows {
            let mut terms = vec![(p, cp), (q, cq)];
            let rhs = match s {
                OctagonBound::Const(c) => mult * c,
                OctagonBound::Scaled(a, smax) => {
                    terms.push((a, -mult * smax));
                    0.0
                }
            };
            self.add_constraint(&format!("{prefix}.{tag}"), terms, Sense::Le, rhs)?;
        }
        Ok(())
    }

    /// Row activity `a'x` for a constraint under the given assignment.
    fn activity(&self, c: &LinearConstraint, values: &[f64]) -> f64 {
        c.terms.iter().map(|(id, coef)| coef * values[id.0]).sum()
    }

    /// Objective `c'x + c0` under the given assignment.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        let linear: f64 = self
            .objective
            .iter()
            .zip(values)
            .map(|(c, v)| c * v)
            .sum();
        linear + self.objective_constant
    }

    /// All rows violated beyond `tol`, with the violation amount.
    pub fn check_assignment(&self, values: &[f64], tol: f64) -> Vec<RowViolation> {
        let mut out = Vec::new();
        for c in &self.constraints {
            let act = self.activity(c, values);
            let slack = match c.sense {
                Sense::Le => act - c.rhs,
                Sense::Ge => c.rhs - act,
                Sense::Eq => (act - c.rhs).abs(),
            };
            if slack > tol {
                out.push(RowViolation {
                    constraint: c.name.clone(),
                    slack,
                });
            }
        }
        out
    }

    /// Bound and integrality violations beyond the given tolerances.
    pub fn check_bounds(&self, values: &[f64], tol: f64, int_tol: f64) -> Vec<RowViolation> {
        let mut out = Vec::new();
        for (i, v) in self.variables.iter().enumerate() {
            let val = values[i];
            let mut slack: f64 = 0.0;
            if val < v.lo - tol {
                slack = v.lo - val;
            } else if val > v.hi + tol {
                slack = val - v.hi;
            }
            if v.kind != VarKind::Continuous {
                let frac = (val - val.round()).abs();
                if frac > int_tol {
                    slack = slack.max(frac);
                }
            }
            if slack > 0.0 {
                out.push(RowViolation {
                    constraint: format!("bound:{}", v.name),
                    slack,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut m = MilpModel::new("t");
        m.add_continuous("x", 0.0, 1.0).unwrap();
        assert!(matches!(
            m.add_continuous("x", 0.0, 1.0),
            Err(ModelError::DuplicateName(_))
        ));
    }

    #[test]
    fn constraint_terms_are_merged() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        m.add_constraint("c", vec![(x, 1.0), (x, 2.0), (x, -3.0)], Sense::Le, 1.0)
            .unwrap();
        assert!(m.constraints()[0].terms.is_empty());
    }

    #[test]
    fn octagon_geometry() {
        // Inscribed circle feasible; corner (s, s) infeasible.
        let mut m = MilpModel::new("t");
        let p = m.add_continuous("p", -10.0, 10.0).unwrap();
        let q = m.add_continuous("q", -10.0, 10.0).unwrap();
        let s = 2.0;
        m.add_octagon("oct", p, q, OctagonBound::Const(s)).unwrap();
        for k in 0..64 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let vals = vec![s * th.cos(), s * th.sin()];
            assert!(
                m.check_assignment(&vals, 1e-9).is_empty(),
                "circle point at theta {th} should be inside"
            );
        }
        assert!(!m.check_assignment(&[s, s], 1e-9).is_empty());
        // Circumscribed radius: points just inside s / cos(pi/8) on the
        // octagon's flat directions are feasible.
        let r = s / (std::f64::consts::PI / 8.0).cos() - 1e-9;
        let th = std::f64::consts::PI / 8.0;
        assert!(m
            .check_assignment(&[r * th.cos(), r * th.sin()], 1e-9)
            .is_empty());
        // ... and anything beyond that radius is infeasible in every direction.
        let r_out = s / (std::f64::consts::PI / 8.0).cos() + 1e-6;
        for k in 0..64 {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 64.0;
            let vals = vec![r_out * th.cos(), r_out * th.sin()];
            assert!(
                !m.check_assignment(&vals, 1e-9).is_empty(),
                "point beyond circumscribed radius at theta {th} must violate"
            );
        }
    }

    #[test]
    fn scaled_octagon_forces_zero_when_open() {
        let mut m = MilpModel::new("t");
        let p = m.add_continuous("p", -10.0, 10.0).unwrap();
        let q = m.add_continuous("q", -10.0, 10.0).unwrap();
        let a = m.add_binary("alpha").unwrap();
        m.add_octagon("oct", p, q, OctagonBound::Scaled(a, 3.0))
            .unwrap();
        // alpha = 0 forces p = q = 0.
        assert!(m.check_assignment(&[0.0, 0.0, 0.0], 1e-9).is_empty());
        assert!(!m.check_assignment(&[0.1, 0.0, 0.0], 1e-9).is_empty());
        // alpha = 1 behaves like the constant octagon.
        assert!(m.check_assignment(&[3.0, 0.0, 1.0], 1e-9).is_empty());
        assert!(!m.check_assignment(&[3.0, 3.0, 1.0], 1e-9).is_empty());
    }

    #[test]
    fn scaled_octagon_requires_binary() {
        let mut m = MilpModel::new("t");
        let p = m.add_continuous("p", -1.0, 1.0).unwrap();
        let q = m.add_continuous("q", -1.0, 1.0).unwrap();
        let c = m.add_continuous("c", 0.0, 1.0).unwrap();
        assert!(matches!(
            m.add_octagon("oct", p, q, OctagonBound::Scaled(c, 1.0)),
            Err(ModelError::NonBinaryScale)
        ));
    }

    #[test]
    fn check_assignment_reports_slack() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        m.add_constraint("row", vec![(x, 1.0)], Sense::Le, 1.0).unwrap();
        let v = m.check_assignment(&[1.5], 1e-9);
        assert_eq!(v.len(), 1);
        assert!((v[0].slack - 0.5).abs() < 1e-12);
        assert!(m.check_assignment(&[0.5], 1e-9).is_empty());
    }
}
