//! Implementations behind the CLI subcommands.

use crate::config::AppConfig;
use crate::{
    BenchArgs, ProfilesArgs, ReportArgs, SampleModeArg, SamplesArgs, ScenariosArgs, SolveArgs,
    SolveMode, TrainArgs,
};
use anyhow::{bail, Context, Result};
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use vvo_core::datagen::{self, DatagenConfig, SampleMode};
use vvo_core::embed::build_neural_vvo;
use vvo_core::feeder::{parse_feeder_file, Feeder};
use vvo_core::milp::{SolveLimits, SolverBackend, TracePoint};
use vvo_core::scenario::{
    load_profiles, load_scenario_set, sample_scenarios, save_profiles, save_scenario_set,
    synthetic_profiles, ScenarioSet,
};
use vvo_core::surrogate::{load_weights, save_weights, train as train_surrogate};
use vvo_core::vvo::{
    build_extensive, evaluate_plan, extract_first_stage, solution_from_extensive,
    solution_from_plan, verify_solution, NeuralInfo, VvoSolution,
};

fn load_feeder(path: &Path) -> Result<Feeder> {
    parse_feeder_file(path).with_context(|| format!("loading feeder {}", path.display()))
}

pub fn feeder_validate(path: &Path) -> Result<i32> {
    let feeder = load_feeder(path)?;
    let violations = feeder.validate();
    if violations.is_empty() {
        println!(
            "{}: OK ({} buses, {} branches, {} DERs, {} switches, {} OLTCs)",
            feeder.name,
            feeder.num_buses(),
            feeder.num_branches(),
            feeder.ders.len(),
            feeder.switchable_branches().count(),
            feeder.oltc_branches().count()
        );
        Ok(0)
    } else {
        for v in &violations {
            println!("violation [{}]: {}", v.code, v.message);
        }
        Ok(2)
    }
}

pub fn datagen_profiles(args: &ProfilesArgs) -> Result<i32> {
    let feeder = load_feeder(&args.feeder)?;
    let profiles = synthetic_profiles(&feeder, args.horizon, args.load_peak_kw, args.pv_scale);
    save_profiles(&profiles, &feeder, &args.out)?;
    println!(
        "wrote base profiles for {} ({} periods) to {}",
        feeder.name,
        args.horizon,
        args.out.display()
    );
    Ok(0)
}

pub fn datagen_scenarios(args: &ScenariosArgs) -> Result<i32> {
    let feeder = load_feeder(&args.feeder)?;
    let base = load_profiles(&feeder, args.horizon, &args.profiles)?;
    let set = sample_scenarios(&base, args.n, args.seed, args.perturbation)?;
    save_scenario_set(&set, &feeder, &args.out)?;
    println!(
        "wrote {} scenarios (seed {}, perturbation {}) to {}.csv",
        args.n,
        args.seed,
        args.perturbation,
        args.out.display()
    );
    Ok(0)
}

pub fn datagen_samples(args: &SamplesArgs) -> Result<i32> {
    let config = AppConfig::load(args.config.as_deref())?;
    let backend = config.backend()?;
    let limits = config.limits();
    let feeder = load_feeder(&args.feeder)?;
    let base = load_profiles(&feeder, args.horizon, &args.profiles)?;
    let mode = match args.mode {
        SampleModeArg::Exact => SampleMode::Exact,
        SampleModeArg::Accelerated => SampleMode::Accelerated,
    };
    let dg = DatagenConfig {
        n_samples: args.n,
        scenarios_per_instance: args.scenarios_per_instance,
        seed: args.seed,
        mode,
        perturbation: args.perturbation,
        eta: args.eta,
        horizon: args.horizon,
    };
    let started = Instant::now();
    let manifest =
        datagen::generate_dataset(&feeder, &base, &dg, backend.as_ref(), &limits, &args.out)?;
    println!(
        "generated {} samples ({} discarded) in {:.1}s at {}",
        manifest.samples.len(),
        manifest.discarded.len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(0)
}

pub fn train(args: &TrainArgs) -> Result<i32> {
    let config = AppConfig::load(args.config.as_deref())?;
    let mut tc = config.train_config(args.seed)?;
    if let Some(epochs) = args.epochs {
        tc.epochs = epochs;
    }
    let feeder = load_feeder(&args.feeder)?;
    let (manifest, samples) = datagen::load_dataset(&feeder, &args.dataset)?;
    if samples.is_empty() {
        bail!("dataset at {} holds no samples", args.dataset.display());
    }
    println!(
        "training on {} samples from {} (mode {:?}, horizon {})",
        samples.len(),
        args.dataset.display(),
        manifest.mode,
        manifest.horizon
    );
    let started = Instant::now();
    let (weights, curve) = train_surrogate(&feeder, &samples, &tc)?;
    save_weights(&weights, &args.out)?;
    println!(
        "trained {} epochs in {:.1}s, final loss {:.6e}, weights at {}",
        curve.len(),
        started.elapsed().as_secs_f64(),
        curve.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    if let Some(curve_path) = &args.loss_curve {
        let mut text = String::from("epoch,loss\n");
        for (i, l) in curve.iter().enumerate() {
            text.push_str(&format!("{i},{l}\n"));
        }
        std::fs::write(curve_path, text)?;
    }
    Ok(0)
}

fn write_solution(path: &Path, solution: &VvoSolution) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    f.write_all(serde_json::to_string_pretty(solution)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn solve(args: &SolveArgs) -> Result<i32> {
    let config = AppConfig::load(args.config.as_deref())?;
    let backend = config.backend()?;
    let limits = config.limits();
    let feeder = load_feeder(&args.feeder)?;
    let set = load_scenario_set(&feeder, &args.scenarios)?;

    let solution = match args.mode {
        SolveMode::Exact => {
            let model = build_extensive(&feeder, &set)?;
            let result = backend.solve(&model, &limits)?;
            if !result.status.has_solution() {
                eprintln!("exact solve ended with status {:?}", result.status);
                return Ok(2);
            }
            solution_from_extensive(&feeder, &set, &model, &result, "exact", backend.name())
                .context("extracting solution record")?
        }
        SolveMode::Neural => {
            let Some(weights_path) = &args.weights else {
                bail!("--weights is required for --mode neural");
            };
            let weights = load_weights(weights_path)?;
            let started = Instant::now();
            let nm = build_neural_vvo(&feeder, &set, &weights)?;
            for dim in &nm.widened_dims {
                eprintln!(
                    "warning: embedding component {dim} left its training envelope; box widened"
                );
            }
            let result = backend.solve(&nm.model, &limits)?;
            if !result.status.has_solution() {
                eprintln!("neural solve ended with status {:?}", result.status);
                return Ok(2);
            }
            let pipeline_s = started.elapsed().as_secs_f64();
            let values = result.assignment.as_ref().expect("solution present");
            let decision = extract_first_stage(&feeder, &nm.model, values, weights.horizon);
            let predicted = nm.predicted_cost(values);
            let mut solution =
                solution_from_plan(&feeder, &set, &decision, backend.as_ref(), &limits, "neural")?;
            solution.neural = Some(NeuralInfo {
                predicted_recourse_cost: predicted,
                evaluated_recourse_cost: solution.objective.expected_curtailment_cost,
            });
            solution.solver.backend = backend.name().to_string();
            solution.solver.wall_s = pipeline_s;
            solution.solver.mip_gap = result.mip_gap;
            solution
        }
    };

    let issues = verify_solution(&feeder, &solution);
    write_solution(&args.out, &solution)?;
    println!(
        "{} solve: status {}, objective {:.4} (curtailment {:.4}, switching {:.4}, oltc {:.4})",
        solution.mode,
        solution.status,
        solution.objective.total,
        solution.objective.expected_curtailment_cost,
        solution.objective.switching_cost,
        solution.objective.oltc_cost
    );
    if !issues.is_empty() {
        for i in &issues {
            eprintln!("verify [{}]: {}", i.code, i.message);
        }
        return Ok(3);
    }
    Ok(0)
}

fn write_trace(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let mut text = String::from("time_s,objective\n");
    for p in trace {
        text.push_str(&format!("{},{}\n", p.time_s, p.objective));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<i32> {
    let config = AppConfig::load(args.config.as_deref())?;
    let backend = config.backend()?;
    let mut limits = config.limits();
    let feeder = load_feeder(&args.feeder)?;
    let base = load_profiles(&feeder, args.horizon, &args.profiles)?;
    let weights = load_weights(&args.weights)?;
    let scenario_counts: Vec<usize> = args
        .scenario_counts
        .split(',')
        .map(|s| s.trim().parse::<usize>().context("parsing --scenario-counts"))
        .collect::<Result<_>>()?;
    if let Some(dir) = &args.traces {
        std::fs::create_dir_all(dir)?;
        limits.capture_trace = true;
    }

    let mut rows: Vec<BenchRow> = Vec::new();
    for &s_count in &scenario_counts {
        for inst in 0..args.instances {
            let seed = vvo_core::scenario::derive_seed(args.seed, (s_count * 10_000 + inst) as u64);
            let set = sample_scenarios(&base, s_count, seed, args.perturbation)?;
            let row = bench_instance(
                &feeder,
                &set,
                &weights,
                backend.as_ref(),
                &limits,
                inst,
                s_count,
                args.traces.as_deref(),
            )?;
            println!(
                "instance {inst} S={s_count}: exact {:.4} in {:.2}s, neural {:.4} in {:.2}s, gap {:.3}%, speedup {:.1}x",
                row.exact_objective,
                row.exact_time_s,
                row.neural_true_cost,
                row.neural_time_s,
                row.gap_pct,
                row.speedup
            );
            rows.push(row);
        }
    }

    write_bench_csv(&args.out, &rows)?;
    println!("wrote {} benchmark rows to {}", rows.len(), args.out.display());
    Ok(0)
}

pub struct BenchRow {
    pub instance: usize,
    pub scenarios: usize,
    pub exact_objective: f64,
    pub neural_predicted: f64,
    pub neural_true_cost: f64,
    pub gap_pct: f64,
    pub exact_time_s: f64,
    pub neural_time_s: f64,
    pub speedup: f64,
    pub exact_clean: bool,
    pub neural_clean: bool,
}

#[allow(clippy::too_many_arguments)]
fn bench_instance(
    feeder: &Feeder,
    set: &ScenarioSet,
    weights: &vvo_core::surrogate::SurrogateWeights,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
    instance: usize,
    s_count: usize,
    traces: Option<&Path>,
) -> Result<BenchRow> {
    // Exact extensive solve.
    let exact_started = Instant::now();
    let exact_model = build_extensive(feeder, set)?;
    let exact_result = backend.solve(&exact_model, limits)?;
    let exact_time_s = exact_started.elapsed().as_secs_f64();
    if !exact_result.status.has_solution() {
        bail!("exact solve failed with status {:?}", exact_result.status);
    }
    let exact_objective = exact_result.objective.expect("objective present");
    let exact_solution = solution_from_extensive(
        feeder,
        set,
        &exact_model,
        &exact_result,
        "exact",
        backend.name(),
    )
    .context("extracting exact solution")?;
    let exact_clean = verify_solution(feeder, &exact_solution).is_empty();
    if let Some(dir) = traces {
        write_trace(
            &dir.join(format!("exact_i{instance}_s{s_count}.csv")),
            &exact_result.trace,
        )?;
    }

    // Neural pipeline: encode, build, solve.
    let neural_started = Instant::now();
    let nm = build_neural_vvo(feeder, set, weights)?;
    let neural_result = backend.solve(&nm.model, limits)?;
    let neural_time_s = neural_started.elapsed().as_secs_f64();
    if !neural_result.status.has_solution() {
        bail!("neural solve failed with status {:?}", neural_result.status);
    }
    let values = neural_result.assignment.as_ref().expect("solution present");
    let decision = extract_first_stage(feeder, &nm.model, values, weights.horizon);
    let neural_predicted = nm.predicted_cost(values)
        + vvo_core::vvo::complete_first_stage(feeder, &decision)
            .map(|c| c.cost())
            .unwrap_or(f64::NAN);

    // True cost of the neural plan, never the surrogate's own prediction.
    let eval = evaluate_plan(feeder, set, &decision, backend, limits)?;
    let neural_true_cost = eval
        .total()
        .ok_or_else(|| anyhow::anyhow!("neural plan has an infeasible recourse scenario"))?;
    let neural_solution = solution_from_plan(feeder, set, &decision, backend, limits, "neural")?;
    let neural_clean = verify_solution(feeder, &neural_solution).is_empty();
    if let Some(dir) = traces {
        write_trace(
            &dir.join(format!("neural_i{instance}_s{s_count}.csv")),
            &neural_result.trace,
        )?;
    }

    let gap_pct = 100.0 * (neural_true_cost - exact_objective) / exact_objective.abs().max(1e-12);
    Ok(BenchRow {
        instance,
        scenarios: s_count,
        exact_objective,
        neural_predicted,
        neural_true_cost,
        gap_pct,
        exact_time_s,
        neural_time_s,
        speedup: exact_time_s / neural_time_s.max(1e-12),
        exact_clean,
        neural_clean,
    })
}

pub const BENCH_HEADER: &[&str] = &[
    "instance",
    "scenarios",
    "exact_objective",
    "neural_predicted",
    "neural_true_cost",
    "gap_pct",
    "exact_time_s",
    "neural_time_s",
    "speedup",
    "exact_clean",
    "neural_clean",
];

fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record([
            r.instance.to_string(),
            r.scenarios.to_string(),
            r.exact_objective.to_string(),
            r.neural_predicted.to_string(),
            r.neural_true_cost.to_string(),
            r.gap_pct.to_string(),
            r.exact_time_s.to_string(),
            r.neural_time_s.to_string(),
            r.speedup.to_string(),
            r.exact_clean.to_string(),
            r.neural_clean.to_string(),
        ])?;
    }
    // Aggregates appended as pseudo-rows.
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap_pct).collect();
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    for (tag, gap, speedup) in [
        ("agg_mean", mean(&gaps), mean(&speedups)),
        ("agg_median", median(&gaps), median(&speedups)),
    ] {
        w.write_record([
            tag.to_string(),
            rows.len().to_string(),
            String::new(),
            String::new(),
            String::new(),
            gap.to_string(),
            String::new(),
            String::new(),
            speedup.to_string(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn report(args: &ReportArgs) -> Result<i32> {
    let mut reader = csv::Reader::from_path(&args.bench)
        .with_context(|| format!("reading {}", args.bench.display()))?;
    let mut rows: Vec<(usize, usize, f64, f64, f64, f64)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.is_empty() || rec[0].starts_with("agg_") {
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .with_context(|| format!("column {i} in {:?}", &rec))
        };
        rows.push((
            rec[0].parse().unwrap_or(0),
            rec[1].parse().unwrap_or(0),
            parse(5)?, // gap_pct
            parse(8)?, // speedup
            parse(6)?, // exact_time_s
            parse(7)?, // neural_time_s
        ));
    }
    if rows.is_empty() {
        bail!("benchmark CSV {} holds no data rows", args.bench.display());
    }

    let mut text = String::new();
    text.push_str(&format!("benchmark report: {}\n", args.bench.display()));
    text.push_str(&format!("instances: {}\n\n", rows.len()));
    text.push_str("scenarios |  mean gap% | median gap% | mean speedup | median speedup\n");
    text.push_str("----------+------------+-------------+--------------+---------------\n");
    let mut counts: Vec<usize> = rows.iter().map(|r| r.1).collect();
    counts.sort_unstable();
    counts.dedup();
    for &s in &counts {
        let gs: Vec<f64> = rows.iter().filter(|r| r.1 == s).map(|r| r.2).collect();
        let sp: Vec<f64> = rows.iter().filter(|r| r.1 == s).map(|r| r.3).collect();
        text.push_str(&format!(
            "{s:9} | {:10.3} | {:11.3} | {:12.2} | {:14.2}\n",
            mean(&gs),
            median(&gs),
            mean(&sp),
            median(&sp)
        ));
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let speedups: Vec<f64> = rows.iter().map(|r| r.3).collect();
    text.push_str(&format!(
        "{:>9} | {:10.3} | {:11.3} | {:12.2} | {:14.2}\n",
        "all",
        mean(&gaps),
        median(&gaps),
        mean(&speedups),
        median(&speedups)
    ));

    // Incumbent traces: validate monotonicity and merge for plotting.
    if let Some(dir) = &args.traces {
        let mut combined = String::from("run,time_s,objective\n");
        let mut names: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        let mut n_points = 0;
        for name in &names {
            let mut r = csv::Reader::from_path(dir.join(name))?;
            let mut last = f64::INFINITY;
            for rec in r.records() {
                let rec = rec?;
                let t: f64 = rec[0].parse().context("trace time")?;
                let obj: f64 = rec[1].parse().context("trace objective")?;
                if obj > last + 1e-9 {
                    bail!("trace {name} has a non-improving incumbent at t={t}");
                }
                last = obj;
                combined.push_str(&format!("{},{t},{obj}\n", name.trim_end_matches(".csv")));
                n_points += 1;
            }
        }
        let combined_path = args
            .out
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("traces_combined.csv");
        std::fs::write(&combined_path, combined)?;
        text.push_str(&format!(
            "\ntraces: {} files, {} incumbent points, merged at {}\n",
            names.len(),
            n_points,
            combined_path.display()
        ));
    }

    std::fs::write(&args.out, &text)?;
    print!("{text}");
    Ok(0)
}
