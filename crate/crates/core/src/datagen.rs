//! Labeled training-sample generation.
//!
//! A sample pairs a scenario set and a first-stage decision with the
//! expected second-stage cost of that decision. The accelerated strategy
//! anchors decisions on kernel solutions (deterministic solves under
//! quantile scenarios), perturbs them through a small auxiliary MILP with
//! a random linear objective and an L1 trust region, and labels them by
//! scenario-wise recourse solves. The exact strategy solves the full
//! extensive form per sample.
//!
//! Datasets persist as a directory: `manifest.json`, per-sample JSON under
//! `samples/`, per-sample scenario CSVs under `scenarios/`, and a
//! `timings.csv` sidecar (wall-clock is the one thing exempt from the
//! byte-reproducibility contract).

use crate::exec;
use crate::feeder::Feeder;
use crate::milp::{SolveError, SolveLimits, SolverBackend, VarKind};
use crate::scenario::{
    self, pool_scenarios, sample_scenarios, Scenario, ScenarioError, ScenarioSet,
};
use crate::surrogate::TrainSample;
use crate::vvo::{
    build_deterministic, build_first_stage, build_recourse, complete_first_stage,
    extract_first_stage, BuildError, FirstStageDecision, FirstStageLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("kernel solve failed: {0}")]
    Kernel(String),
    #[error("perturbation produced no feasible decision: {0}")]
    Perturb(String),
    #[error("{failed} of {total} samples failed, exceeding the 10% quota")]
    TooManyFailures { failed: usize, total: usize },
    #[error("dataset error: {0}")]
    Dataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Exact,
    Accelerated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatagenConfig {
    pub n_samples: usize,
    pub scenarios_per_instance: usize,
    pub seed: u64,
    pub mode: SampleMode,
    /// Relative perturbation of the base profiles per scenario.
    pub perturbation: f64,
    /// Trust-region fraction for first-stage perturbation.
    pub eta: f64,
    pub horizon: usize,
}

impl DatagenConfig {
    pub fn new(n_samples: usize, mode: SampleMode, seed: u64, horizon: usize) -> DatagenConfig {
        DatagenConfig {
            n_samples,
            scenarios_per_instance: 10,
            seed,
            mode,
            perturbation: 0.2,
            eta: 0.2,
            horizon,
        }
    }
}

/// One persisted training sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSampleDoc {
    pub id: usize,
    /// Path stem of the scenario set, relative to the dataset root.
    pub scenario_set_ref: String,
    pub x_flat: Vec<f64>,
    /// Expected second-stage cost in dollars.
    pub label: f64,
    /// Switching plus tap cost of the decision (useful for audits).
    pub first_stage_cost: f64,
    pub provenance: SampleMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub feeder: String,
    pub mode: SampleMode,
    pub seed: u64,
    pub horizon: usize,
    pub scenarios_per_instance: usize,
    pub perturbation: f64,
    pub eta: f64,
    pub samples: Vec<SampleEntry>,
    pub discarded: Vec<DiscardEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscardEntry {
    pub id: usize,
    pub reason: String,
}

/// Pick the low/median/high total-demand scenarios out of a pool.
pub fn select_kernel_scenarios(pool: &ScenarioSet) -> Vec<usize> {
    let mut energies: Vec<(usize, f64)> = pool
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, sc)| (i, sc.pd_hat.sum()))
        .collect();
    energies.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite demand"));
    let n = energies.len();
    let mut picks = vec![energies[0].0, energies[n / 2].0, energies[n - 1].0];
    picks.dedup();
    picks
}

/// Solve the deterministic VVO for each selected scenario; failed kernels
/// are skipped, at least one must survive.
pub fn solve_kernel(
    feeder: &Feeder,
    scenarios: &[Scenario],
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
) -> Result<Vec<FirstStageDecision>, DatagenError> {
    let mut kernels = Vec::new();
    let mut failures = Vec::new();
    for (i, sc) in scenarios.iter().enumerate() {
        let horizon = sc.horizon();
        let model = build_deterministic(feeder, sc, horizon)?;
        match backend.solve(&model, limits) {
            Ok(result) if result.status.has_solution() => {
                let values = result.assignment.as_ref().expect("solution present");
                kernels.push(extract_first_stage(feeder, &model, values, horizon));
            }
            Ok(result) => failures.push(format!("kernel {i}: status {:?}", result.status)),
            Err(e) => failures.push(format!("kernel {i}: {e}")),
        }
    }
    if kernels.is_empty() {
        return Err(DatagenError::Kernel(failures.join("; ")));
    }
    Ok(kernels)
}

/// Randomized feasible perturbation of a kernel decision: minimize a
/// uniform-random linear objective over the first-stage feasible set
/// intersected with the L1 ball of radius `eta * n_bits` around the
/// kernel.
pub fn perturb_first_stage(
    feeder: &Feeder,
    kernel: &FirstStageDecision,
    seed: u64,
    eta: f64,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
) -> Result<FirstStageDecision, DatagenError> {
    let horizon = kernel.horizon();
    let layout = FirstStageLayout::new(feeder, horizon);
    let (mut model, _) = build_first_stage(feeder, horizon)?;
    model.clear_objective();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = layout.var_names(feeder);
    let anchor = layout.encode(kernel);
    let mut ball = Vec::with_capacity(names.len());
    let mut anchor_ones = 0.0;
    for (slot, name) in names.iter().enumerate() {
        let id = model.lookup(name).expect("layout variable exists");
        debug_assert_eq!(model.var(id).kind, VarKind::Binary);
        model.add_objective_term(id, rng.gen_range(-1.0..1.0));
        // |x - x*| for binaries: x* = 1 contributes (1 - x), else x.
        if anchor[slot] > 0.5 {
            ball.push((id, -1.0));
            anchor_ones += 1.0;
        } else {
            ball.push((id, 1.0));
        }
    }
    let radius = eta * names.len() as f64;
    model
        .add_constraint(
            "trust.l1",
            ball,
            crate::milp::Sense::Le,
            radius - anchor_ones,
        )
        .map_err(BuildError::from)?;

    let result = backend.solve(&model, limits)?;
    if !result.status.has_solution() {
        return Err(DatagenError::Perturb(format!(
            "auxiliary problem status {:?}",
            result.status
        )));
    }
    let values = result.assignment.as_ref().expect("solution present");
    let flat: Vec<f64> = names
        .iter()
        .map(|n| values[model.lookup(n).expect("known var").0])
        .collect();
    Ok(layout.decode(feeder, &flat))
}

/// Expected recourse cost of a decision over a scenario set, solved
/// scenario by scenario (parallel, order-independent aggregation).
pub fn label_sample(
    feeder: &Feeder,
    set: &ScenarioSet,
    decision: &FirstStageDecision,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
) -> Result<f64, String> {
    let results = exec::map_indices(set.len(), |s| {
        let model =
            build_recourse(feeder, &set.scenarios[s], decision).map_err(|e| e.to_string())?;
        let r = backend.solve(&model, limits).map_err(|e| e.to_string())?;
        match r.objective {
            Some(q) if r.status.has_solution() => Ok(q),
            _ => Err(format!("scenario {s}: status {:?}", r.status)),
        }
    });
    let mut label = 0.0;
    for (s, r) in results.into_iter().enumerate() {
        label += set.probabilities[s] * r?;
    }
    Ok(label)
}

struct SampleOutcome {
    id: usize,
    result: Result<(FirstStageDecision, f64, ScenarioSet), String>,
    seconds: f64,
}

/// Generate and persist a dataset. Returns the manifest.
pub fn generate_dataset(
    feeder: &Feeder,
    profiles: &Scenario,
    config: &DatagenConfig,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, DatagenError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir.join("samples"))?;
    std::fs::create_dir_all(out_dir.join("scenarios"))?;
    let layout = FirstStageLayout::new(feeder, config.horizon);

    // Kernels for the accelerated mode: quantile scenarios from a pool.
    let kernels = if config.mode == SampleMode::Accelerated {
        let pool = sample_scenarios(
            profiles,
            30.max(config.scenarios_per_instance),
            scenario::derive_seed(config.seed, 0xFEED),
            config.perturbation,
        )?;
        let picks = select_kernel_scenarios(&pool);
        let chosen: Vec<Scenario> = picks.iter().map(|&i| pool.scenarios[i].clone()).collect();
        solve_kernel(feeder, &chosen, backend, limits)?
    } else {
        Vec::new()
    };

    // Per-sample work, parallel across samples.
    let outcomes: Vec<SampleOutcome> = exec::map_indices(config.n_samples, |i| {
        let start = Instant::now();
        let sample_seed = scenario::derive_seed(config.seed, i as u64 + 1);
        let result = (|| -> Result<(FirstStageDecision, f64, ScenarioSet), String> {
            let set = sample_scenarios(
                profiles,
                config.scenarios_per_instance,
                sample_seed,
                config.perturbation,
            )
            .map_err(|e| e.to_string())?;
            match config.mode {
                SampleMode::Accelerated => {
                    let kernel = &kernels[i % kernels.len()];
                    let decision = perturb_first_stage(
                        feeder,
                        kernel,
                        scenario::derive_seed(sample_seed, 7),
                        config.eta,
                        backend,
                        limits,
                    )
                    .map_err(|e| e.to_string())?;
                    let label = label_sample(feeder, &set, &decision, backend, limits)?;
                    Ok((decision, label, set))
                }
                SampleMode::Exact => {
                    let model =
                        crate::vvo::build_extensive(feeder, &set).map_err(|e| e.to_string())?;
                    let r = backend.solve(&model, limits).map_err(|e| e.to_string())?;
                    if !r.status.has_solution() {
                        return Err(format!("extensive solve status {:?}", r.status));
                    }
                    let values = r.assignment.as_ref().expect("solution present");
                    let decision = extract_first_stage(feeder, &model, values, config.horizon);
                    let completion =
                        complete_first_stage(feeder, &decision).map_err(|e| e.to_string())?;
                    let label = r.objective.expect("objective present") - completion.cost();
                    Ok((decision, label, set))
                }
            }
        })();
        SampleOutcome {
            id: i,
            result,
            seconds: start.elapsed().as_secs_f64(),
        }
    });

    // Single-consumer writer.
    let mut manifest = DatasetManifest {
        version: 1,
        feeder: feeder.name.clone(),
        mode: config.mode,
        seed: config.seed,
        horizon: config.horizon,
        scenarios_per_instance: config.scenarios_per_instance,
        perturbation: config.perturbation,
        eta: config.eta,
        samples: Vec::new(),
        discarded: Vec::new(),
    };
    let mut timings = String::from("id,seconds\n");
    for outcome in outcomes {
        timings.push_str(&format!("{},{}\n", outcome.id, outcome.seconds));
        match outcome.result {
            Ok((decision, label, set)) => {
                let stem = format!("scenarios/sample{:05}", outcome.id);
                scenario::save_scenario_set(&set, feeder, out_dir.join(&stem))?;
                let completion =
                    complete_first_stage(feeder, &decision).map_err(DatagenError::Dataset)?;
                let doc = TrainingSampleDoc {
                    id: outcome.id,
                    scenario_set_ref: stem,
                    x_flat: layout.encode(&decision),
                    label,
                    first_stage_cost: completion.cost(),
                    provenance: config.mode,
                };
                let file = format!("samples/sample{:05}.json", outcome.id);
                let mut f = std::fs::File::create(out_dir.join(&file))?;
                f.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
                f.write_all(b"\n")?;
                manifest.samples.push(SampleEntry {
                    id: outcome.id,
                    file,
                });
            }
            Err(reason) => {
                manifest.discarded.push(DiscardEntry {
                    id: outcome.id,
                    reason,
                });
            }
        }
    }
    let failed = manifest.discarded.len();
    if failed * 10 > config.n_samples {
        return Err(DatagenError::TooManyFailures {
            failed,
            total: config.n_samples,
        });
    }
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    std::fs::write(out_dir.join("timings.csv"), timings)?;
    Ok(manifest)
}

/// Load a dataset directory back into training samples (pooling each
/// sample's scenario set).
pub fn load_dataset(
    feeder: &Feeder,
    dir: impl AsRef<Path>,
) -> Result<(DatasetManifest, Vec<TrainSample>), DatagenError> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let doc: TrainingSampleDoc =
            serde_json::from_str(&std::fs::read_to_string(dir.join(&entry.file))?)?;
        let set = scenario::load_scenario_set(feeder, dir.join(&doc.scenario_set_ref))?;
        let pooled = pool_scenarios(&set)?;
        samples.push(TrainSample {
            pooled: pooled.data,
            x_flat: doc.x_flat,
            label: doc.label,
        });
    }
    Ok((manifest, samples))
}

/// Load the raw sample documents (for audits that need decisions and
/// scenario references rather than pooled features).
pub fn load_sample_docs(
    dir: impl AsRef<Path>,
) -> Result<(DatasetManifest, Vec<TrainingSampleDoc>), DatagenError> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut docs = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        docs.push(serde_json::from_str(&std::fs::read_to_string(
            dir.join(&entry.file),
        )?)?);
    }
    Ok((manifest, docs))
}
