//! Solver backends behind a common trait.
//!
//! [`HighsBackend`] drives the in-process HiGHS library and is the default.
//! [`ProcessBackend`] writes free MPS, invokes a configured external solver
//! executable, and parses its textual solution dump (CBC-style format);
//! `tools/solve_mps.py` in the repository root is a ready-made external
//! solver built on SciPy's HiGHS interface.
//!
//! Every backend runs an internal feasibility audit on the returned
//! assignment (rows at 1e-6, integrality at 1e-5) before handing it back.

use super::model::{MilpModel, RowViolation, Sense, VarKind};
use super::mps::export_mps;
use std::num::NonZeroU32;
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

pub const FEASIBILITY_TOL: f64 = 1e-6;
pub const INTEGRALITY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// A feasible incumbent without proof of optimality (e.g. gap or time
    /// limit reached with a solution in hand).
    Feasible,
    Infeasible,
    Unbounded,
    /// Limit reached without any incumbent.
    Timeout,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

/// One incumbent-improvement event: (seconds since solve start, objective).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time_s: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Values indexed by the model's variable order; present iff the
    /// status carries a solution.
    pub assignment: Option<Vec<f64>>,
    pub wall_s: f64,
    pub mip_gap: Option<f64>,
    /// Incumbent trace parsed from the solver log, when available.
    pub trace: Vec<TracePoint>,
}

impl SolveResult {
    pub fn value(&self, model: &MilpModel, name: &str) -> Option<f64> {
        let id = model.lookup(name)?;
        self.assignment.as_ref().map(|a| a[id.0])
    }

    pub fn require_solution(&self) -> Result<&Vec<f64>, SolveError> {
        self.assignment
            .as_ref()
            .ok_or(SolveError::NoSolution(self.status))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveLimits {
    pub time_limit_s: Option<f64>,
    pub mip_gap: Option<f64>,
    /// Capture an incumbent trace from the solver log.
    pub capture_trace: bool,
}

impl SolveLimits {
    pub fn with_gap(gap: f64) -> SolveLimits {
        SolveLimits {
            mip_gap: Some(gap),
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("failed to launch solver {cmd}: {source}")]
    Launch {
        cmd: String,
        source: std::io::Error,
    },
    #[error("solver backend error: {0}")]
    Backend(String),
    #[error("could not parse solver output: {0}")]
    Parse(String),
    #[error("no solution available (status {0:?})")]
    NoSolution(SolveStatus),
    #[error("solver returned an assignment violating {count} rows (worst {worst:.3e} on {name})")]
    InfeasibleAssignment {
        count: usize,
        worst: f64,
        name: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub trait SolverBackend: Sync {
    fn name(&self) -> &str;
    fn solve(&self, model: &MilpModel, limits: &SolveLimits) -> Result<SolveResult, SolveError>;
}

fn audit(model: &MilpModel, values: &[f64]) -> Result<(), SolveError> {
    let mut bad: Vec<RowViolation> = model.check_assignment(values, FEASIBILITY_TOL);
    bad.extend(model.check_bounds(values, FEASIBILITY_TOL, INTEGRALITY_TOL));
    if let Some(worst) = bad
        .iter()
        .max_by(|a, b| a.slack.partial_cmp(&b.slack).expect("finite slacks"))
    {
        return Err(SolveError::InfeasibleAssignment {
            count: bad.len(),
            worst: worst.slack,
            name: worst.constraint.clone(),
        });
    }
    Ok(())
}

/// In-process HiGHS. Single-threaded with a fixed random seed so repeated
/// solves of the same model are reproducible.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    pub seed: i32,
}

impl Default for HighsBackend {
    fn default() -> Self {
        HighsBackend { seed: 0 }
    }
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, limits: &SolveLimits) -> Result<SolveResult, SolveError> {
        use highs::{HighsModelStatus, RowProblem, Sense as HSense};

        let start = Instant::now();
        let mut pb = RowProblem::default();
        let mut cols = Vec::with_capacity(model.num_vars());
        for (vi, v) in model.variables().iter().enumerate() {
            let cost = model.objective()[vi];
            let col = match v.kind {
                VarKind::Continuous => pb.add_column(cost, v.lo..=v.hi),
                VarKind::Binary | VarKind::Integer => pb.add_integer_column(cost, v.lo..=v.hi),
            };
            cols.push(col);
        }
        for c in model.constraints() {
            let row: Vec<_> = c.terms.iter().map(|(id, coef)| (cols[id.0], *coef)).collect();
            match c.sense {
                Sense::Le => pb.add_row(..=c.rhs, &row),
                Sense::Ge => pb.add_row(c.rhs.., &row),
                Sense::Eq => pb.add_row(c.rhs..=c.rhs, &row),
            };
        }

        let mut m = pb.optimise(HSense::Minimise);
        m.set_threads(NonZeroU32::new(1).expect("nonzero"));
        m.set_option("random_seed", self.seed);
        m.set_option("output_flag", false);
        let log_path = if limits.capture_trace {
            let dir = std::env::temp_dir();
            let path = dir.join(format!(
                "vvo-highs-{}-{}.log",
                std::process::id(),
                start.elapsed().as_nanos()
            ));
            m.set_option("output_flag", true);
            m.set_option("log_to_console", false);
            m.set_option("log_file", path.to_string_lossy().as_ref());
            Some(path)
        } else {
            None
        };
        if let Some(t) = limits.time_limit_s {
            m.set_option("time_limit", t);
        }
        m.set_option("mip_rel_gap", limits.mip_gap.unwrap_or(1e-9));

        let solved = m
            .try_solve()
            .map_err(|s| SolveError::Backend(format!("HiGHS run failed: {s:?}")))?;
        let wall_s = start.elapsed().as_secs_f64();

        let raw_status = solved.status();
        let has_primal =
            solved.primal_solution_status() == highs::HighsSolutionStatus::Feasible;
        let status = match raw_status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Unbounded
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedMemoryLimit => {
                if has_primal {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Timeout
                }
            }
            other => {
                return Err(SolveError::Backend(format!(
                    "unexpected HiGHS status {other:?}"
                )))
            }
        };

        let trace = match &log_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).unwrap_or_default();
                let _ = std::fs::remove_file(path);
                parse_highs_log_trace(&text)
            }
            None => Vec::new(),
        };

        let (objective, assignment) = if status.has_solution() {
            let values = if model.num_vars() == 0 {
                Vec::new()
            } else {
                solved.get_solution().columns().to_vec()
            };
            audit(model, &values)?;
            (Some(model.objective_value(&values)), Some(values))
        } else {
            (None, None)
        };
        let mip_gap = if status.has_solution() {
            let g = solved.mip_gap();
            g.is_finite().then_some(g)
        } else {
            None
        };

        Ok(SolveResult {
            status,
            objective,
            assignment,
            wall_s,
            mip_gap,
            trace,
        })
    }
}

/// Parse incumbent improvements out of a HiGHS MIP log. Progress lines end
/// in an elapsed-time token like `12.3s`; the incumbent objective sits
/// seven tokens from the end (`BestSol` column).
pub fn parse_highs_log_trace(log: &str) -> Vec<TracePoint> {
    let mut out: Vec<TracePoint> = Vec::new();
    for line in log.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 10 {
            continue;
        }
        let last = tokens[tokens.len() - 1];
        if !last.ends_with('s') {
            continue;
        }
        let Ok(time_s) = last[..last.len() - 1].parse::<f64>() else {
            continue;
        };
        // Gap column sits right after BestSol and carries a % (or inf).
        let gap_tok = tokens[tokens.len() - 6];
        if !(gap_tok.ends_with('%') || gap_tok.contains("inf")) {
            continue;
        }
        let Ok(best_sol) = tokens[tokens.len() - 7].parse::<f64>() else {
            continue;
        };
        if !best_sol.is_finite() {
            continue;
        }
        if out.last().map_or(true, |p| best_sol < p.objective) {
            out.push(TracePoint {
                time_s,
                objective: best_sol,
            });
        }
    }
    out
}

/// Parse incumbent lines from a CBC-style log
/// (`Integer solution of <obj> found ... (<t> seconds)`).
pub fn parse_cbc_log_trace(log: &str) -> Vec<TracePoint> {
    let mut out: Vec<TracePoint> = Vec::new();
    for line in log.lines() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix("Integer solution of ") else {
            continue;
        };
        let Some(obj_tok) = rest.split_whitespace().next() else {
            continue;
        };
        let Ok(objective) = obj_tok.parse::<f64>() else {
            continue;
        };
        let time_s = line
            .rsplit_once('(')
            .and_then(|(_, tail)| tail.split_whitespace().next())
            .and_then(|t| t.parse::<f64>().ok())
            .unwrap_or(0.0);
        if out.last().map_or(true, |p| objective < p.objective) {
            out.push(TracePoint { time_s, objective });
        }
    }
    out
}

/// External solver invoked per solve: the model is written as free MPS,
/// the command runs with `{mps}`, `{sol}`, `{time_limit}`, `{gap}`
/// placeholders substituted in its arguments, and the solution file is
/// parsed in the CBC text format:
///
/// ```text
/// Optimal - objective value 3.0000000
///       0 x   3.0000000   0.0
/// ```
#[derive(Debug, Clone)]
pub struct ProcessBackend {
    pub cmd: String,
    pub args: Vec<String>,
    /// Directory for scratch files; defaults to the system temp dir.
    pub workdir: Option<PathBuf>,
}

impl ProcessBackend {
    pub fn new(cmd: impl Into<String>, args: Vec<String>) -> ProcessBackend {
        ProcessBackend {
            cmd: cmd.into(),
            args,
            workdir: None,
        }
    }
}

impl SolverBackend for ProcessBackend {
    fn name(&self) -> &str {
        "process"
    }

    fn solve(&self, model: &MilpModel, limits: &SolveLimits) -> Result<SolveResult, SolveError> {
        let start = Instant::now();
        let dir = self
            .workdir
            .clone()
            .unwrap_or_else(std::env::temp_dir);
        let tag = format!("vvo-{}-{}", std::process::id(), start.elapsed().as_nanos());
        let mps_path = dir.join(format!("{tag}.mps"));
        let sol_path = dir.join(format!("{tag}.sol"));
        std::fs::write(&mps_path, export_mps(model))?;

        let time_limit = limits.time_limit_s.unwrap_or(1e8);
        let gap = limits.mip_gap.unwrap_or(1e-9);
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{mps}", &mps_path.to_string_lossy())
                    .replace("{sol}", &sol_path.to_string_lossy())
                    .replace("{time_limit}", &format!("{time_limit}"))
                    .replace("{gap}", &format!("{gap}"))
            })
            .collect();
        let output = std::process::Command::new(&self.cmd)
            .args(&args)
            .output()
            .map_err(|source| SolveError::Launch {
                cmd: self.cmd.clone(),
                source,
            })?;
        if !output.status.success() {
            let _ = std::fs::remove_file(&mps_path);
            return Err(SolveError::Backend(format!(
                "{} exited with {}: {}",
                self.cmd,
                output.status,
                String::from_utf8_lossy(&output.stderr)
            )));
        }
        let text = std::fs::read_to_string(&sol_path).map_err(|_| {
            SolveError::Parse(format!("solver wrote no solution file at {sol_path:?}"))
        })?;
        let _ = std::fs::remove_file(&mps_path);
        let _ = std::fs::remove_file(&sol_path);
        let wall_s = start.elapsed().as_secs_f64();

        let (status, file_objective, values) = parse_cbc_solution(model, &text)?;
        let trace = if limits.capture_trace {
            parse_cbc_log_trace(&String::from_utf8_lossy(&output.stdout))
        } else {
            Vec::new()
        };
        let (objective, assignment) = if status.has_solution() {
            let values = values.ok_or_else(|| {
                SolveError::Parse("solution file carries no variable values".into())
            })?;
            audit(model, &values)?;
            // Trust our own recomputation; keep the solver's number as a
            // consistency reference.
            let internal = model.objective_value(&values);
            if let Some(fo) = file_objective {
                if (fo - internal).abs() > 1e-4 * (1.0 + internal.abs()) {
                    return Err(SolveError::Parse(format!(
                        "solver objective {fo} disagrees with recomputed {internal}"
                    )));
                }
            }
            (Some(internal), Some(values))
        } else {
            (None, None)
        };
        Ok(SolveResult {
            status,
            objective,
            assignment,
            wall_s,
            mip_gap: None,
            trace,
        })
    }
}

/// Parse a CBC-format solution file into (status, objective, values).
fn parse_cbc_solution(
    model: &MilpModel,
    text: &str,
) -> Result<(SolveStatus, Option<f64>, Option<Vec<f64>>), SolveError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SolveError::Parse("empty solution file".into()))?;
    let lower = header.to_lowercase();
    let status = if lower.starts_with("optimal") {
        SolveStatus::Optimal
    } else if lower.contains("infeasible") {
        SolveStatus::Infeasible
    } else if lower.contains("unbounded") {
        SolveStatus::Unbounded
    } else if lower.contains("stopped") || lower.contains("time") {
        // CBC writes "Stopped on time limit - objective value ..." when an
        // incumbent exists.
        if lower.contains("objective value") {
            SolveStatus::Feasible
        } else {
            SolveStatus::Timeout
        }
    } else if lower.contains("feasible") {
        SolveStatus::Feasible
    } else {
        return Err(SolveError::Parse(format!(
            "unrecognized solution header {header:?}"
        )));
    };
    let objective = header
        .rsplit_once("objective value")
        .and_then(|(_, tail)| tail.split_whitespace().next())
        .and_then(|tok| tok.parse::<f64>().ok());

    if !status.has_solution() {
        return Ok((status, objective, None));
    }
    let mut values = vec![0.0; model.num_vars()];
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 {
            continue;
        }
        // Format: index name value [reduced cost]; tolerate a missing index.
        let (name, value_tok) = if tokens[0].parse::<usize>().is_ok() && tokens.len() >= 3 {
            (tokens[1], tokens[2])
        } else {
            (tokens[0], tokens[1])
        };
        let Some(id) = model.lookup(name) else {
            continue;
        };
        let v: f64 = value_tok
            .parse()
            .map_err(|_| SolveError::Parse(format!("bad value {value_tok:?} for {name}")))?;
        values[id.0] = v;
    }
    Ok((status, objective, Some(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{MilpModel, Sense};

    fn backend() -> HighsBackend {
        HighsBackend::default()
    }

    #[test]
    fn min_x_with_lower_bound() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_objective_term(x, 1.0);
        m.add_constraint("lb", vec![(x, 1.0)], Sense::Ge, 3.0).unwrap();
        let r = backend().solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - 3.0).abs() < 1e-9);
        assert!((r.value(&m, "x").unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn max_binary_via_negated_objective() {
        let mut m = MilpModel::new("t");
        let x = m.add_binary("x").unwrap();
        m.add_objective_term(x, -1.0);
        let r = backend().solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() + 1.0).abs() < 1e-9);
        assert!((r.value(&m, "x").unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_pair() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_constraint("ge", vec![(x, 1.0)], Sense::Ge, 1.0).unwrap();
        m.add_constraint("le", vec![(x, 1.0)], Sense::Le, 0.0).unwrap();
        let r = backend().solve(&m, &SolveLimits::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.assignment.is_none());
    }

    #[test]
    fn objective_constant_included() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 5.0).unwrap();
        m.add_objective_term(x, 2.0);
        m.add_objective_constant(10.0);
        m.add_constraint("lb", vec![(x, 1.0)], Sense::Ge, 1.0).unwrap();
        let r = backend().solve(&m, &SolveLimits::default()).unwrap();
        assert!((r.objective.unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn cbc_solution_parse() {
        let mut m = MilpModel::new("t");
        m.add_continuous("x", 0.0, 5.0).unwrap();
        m.add_binary("b").unwrap();
        let text = "Optimal - objective value 3.25\n 0 x 3.0000000 0.0\n 1 b 0.25e1 0.0\n";
        let (status, obj, values) = parse_cbc_solution(&m, text).unwrap();
        assert_eq!(status, SolveStatus::Optimal);
        assert_eq!(obj, Some(3.25));
        assert_eq!(values, Some(vec![3.0, 2.5]));
    }

    #[test]
    fn highs_trace_parser_on_captured_log() {
        // A knapsack-style MIP big enough for HiGHS to log incumbents.
        let mut m = MilpModel::new("trace");
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut terms = Vec::new();
        for i in 0..n {
            let x = m.add_binary(&format!("x{i}")).unwrap();
            m.add_objective_term(x, -rng.gen_range(1.0..10.0));
            terms.push((x, rng.gen_range(1.0..10.0)));
        }
        m.add_constraint("cap", terms, Sense::Le, 40.0).unwrap();
        let r = backend()
            .solve(
                &m,
                &SolveLimits {
                    capture_trace: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // The trace, when present, is strictly improving.
        for w in r.trace.windows(2) {
            assert!(w[1].objective < w[0].objective);
            assert!(w[1].time_s >= w[0].time_s);
        }
        if let Some(last) = r.trace.last() {
            assert!((last.objective - r.objective.unwrap()).abs() < 1e-4 * (1.0 + r.objective.unwrap().abs()));
        }
    }
}
