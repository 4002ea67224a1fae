//! Subcommand implementations. Each returns the process exit code.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use sddp_reg_core::portfolio::{
    build_direct_cost_models, generate_synthetic_returns, PortfolioParams,
};
use sddp_reg_core::report::PolicySimulation;
use sddp_reg_core::{
    run_deterministic, run_sddp, run_sreda_fulltree, solve_extensive, ClarabelSolver,
    MultistageProblem, SolveReport, StochasticConfig, Termination, Variant,
};

use crate::config::{
    build_problem, deterministic_config, stochastic_stopping, LoadedConfig, ProblemConfig,
    StoppingConfig,
};
use crate::error::CliError;
use crate::io::{atomic_write, bounds_csv, returns_csv, write_cuts, write_json};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ITERATION_LIMIT: i32 = 2;

#[derive(Debug, Serialize)]
struct SimulationSummary {
    n: usize,
    mean: f64,
    stderr: f64,
    confidence_bound: f64,
    confidence: f64,
}

impl From<&PolicySimulation> for SimulationSummary {
    fn from(s: &PolicySimulation) -> Self {
        SimulationSummary {
            n: s.values.len(),
            mean: s.mean,
            stderr: s.stderr,
            confidence_bound: s.confidence_bound,
            confidence: s.confidence,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    variant: &'a str,
    seed: Option<u64>,
    termination: Termination,
    iterations: usize,
    final_lower_bound: Option<f64>,
    final_upper_bound: Option<f64>,
    config_digest: &'a str,
    cut_counts: &'a [usize],
    /// Stage-1 decision in reported units.
    first_stage_decision: Vec<f64>,
    simulation: Option<SimulationSummary>,
    warnings: &'a [String],
}

fn out_dir(loaded: &LoadedConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| loaded.config.output.dir.as_ref().map(|d| loaded.resolve(d)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_artifacts(
    loaded: &LoadedConfig,
    dir: &Path,
    problem: &MultistageProblem,
    report: &SolveReport,
) -> Result<(), CliError> {
    atomic_write(&dir.join("bounds.csv"), &bounds_csv(&report.records))?;
    if loaded.config.output.cuts {
        write_cuts(&dir.join("cuts"), &report.pools)?;
    }
    if let Some(sim) = &report.simulation {
        write_json(&dir.join("simulation.json"), sim)?;
    }
    let run = RunReport {
        variant: &report.variant,
        seed: report.seed,
        termination: report.termination,
        iterations: report.iterations(),
        final_lower_bound: report.final_lower_bound,
        final_upper_bound: report.final_upper_bound,
        config_digest: &loaded.digest,
        cut_counts: &report.cut_counts,
        first_stage_decision: report
            .trajectory
            .first()
            .map(|x| x.iter().map(|v| v * problem.value_scale).collect())
            .unwrap_or_default(),
        simulation: report.simulation.as_ref().map(SimulationSummary::from),
        warnings: &report.warnings,
    };
    write_json(&dir.join("report.json"), &run)
}

fn log_trace(report: &SolveReport) {
    for r in &report.records {
        log::debug!(
            "iteration {}: lower {:?} upper {:?} gap% {:?}",
            r.iteration,
            r.lower_bound,
            r.upper_bound,
            r.gap_pct()
        );
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{}: {:?} after {} iterations, bounds [{:?}, {:?}]",
        report.variant,
        report.termination,
        report.iterations(),
        report.final_lower_bound,
        report.final_upper_bound
    );
}

fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Gap | Termination::IterationBudget => EXIT_OK,
        Termination::IterationLimit => EXIT_ITERATION_LIMIT,
    }
}

fn solver(tolerance: f64) -> ClarabelSolver {
    ClarabelSolver::with_tolerance(tolerance)
}

pub fn solve_det(config: &Path, out: Option<&Path>) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(config)?;
    let variant = loaded.variant()?;
    if variant.stochastic {
        return Err(CliError::Config(format!(
            "solve-det needs DDP or a REDDP variant, got {variant}"
        )));
    }
    let problem = loaded.build_problem()?;
    let cfg = loaded.deterministic_config()?;
    let report = run_deterministic(
        &problem,
        variant.scheme,
        &cfg,
        &solver(loaded.config.algorithm.solver_tolerance),
    )?;
    log_trace(&report);
    write_artifacts(&loaded, &out_dir(&loaded, out), &problem, &report)?;
    Ok(exit_code(report.termination))
}

fn stochastic_config(
    variant: Variant,
    loaded: &LoadedConfig,
) -> Result<StochasticConfig, CliError> {
    let alg = &loaded.config.algorithm;
    Ok(StochasticConfig {
        scheme: variant.scheme,
        paths_per_iteration: alg.paths_per_iteration,
        stopping: loaded.stochastic_stopping()?,
        seed: alg.seed,
    })
}

pub fn solve_stoch(config: &Path, out: Option<&Path>) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(config)?;
    let variant = loaded.variant()?;
    if !variant.stochastic {
        return Err(CliError::Config(format!(
            "solve-stoch needs SDDP or an SDDP-REG variant, got {variant}"
        )));
    }
    let problem = loaded.build_problem()?;
    let cfg = stochastic_config(variant, &loaded)?;
    let risk = &loaded.config.problem.risk;
    let s = solver(loaded.config.algorithm.solver_tolerance);
    let report = if loaded.config.algorithm.full_tree {
        run_sreda_fulltree(&problem, risk, &cfg, loaded.config.problem.node_budget, &s)?
    } else {
        run_sddp(&problem, risk, &cfg, &s)?
    };
    log_trace(&report);
    write_artifacts(&loaded, &out_dir(&loaded, out), &problem, &report)?;
    Ok(exit_code(report.termination))
}

#[derive(Debug, Serialize)]
struct OracleReport {
    value: f64,
    internal_value: f64,
    nodes: usize,
    config_digest: String,
}

pub fn oracle(config: &Path, out: Option<&Path>) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(config)?;
    let problem = loaded.build_problem()?;
    let pc = &loaded.config.problem;
    let sol = solve_extensive(
        &problem,
        &pc.risk,
        pc.node_budget,
        &solver(loaded.config.algorithm.solver_tolerance),
    )?;
    let report = OracleReport {
        value: sol.reported,
        internal_value: sol.value,
        nodes: sol.nodes.len(),
        config_digest: loaded.digest.clone(),
    };
    println!("{}", sol.reported);
    write_json(&out_dir(&loaded, out).join("oracle.json"), &report)?;
    Ok(EXIT_OK)
}

/// Benchmark suite: every variant on every instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub instances: Vec<SuiteInstance>,
    #[serde(default)]
    pub variants: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub solver_tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteInstance {
    pub name: String,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub stopping: Option<StoppingConfig>,
}

pub const BENCH_HEADER: &str =
    "instance,variant,iterations,wall_ms,final_gap,iteration_ratio,time_ratio";

struct BenchRow {
    instance: usize,
    variant: String,
    /// Iterations, wall ms and relative gap, or the failure message.
    result: Result<(usize, f64, Option<f64>), String>,
}

fn bench_one(
    suite: &Suite,
    inst: &SuiteInstance,
    problem: &Result<MultistageProblem, String>,
    name: &str,
) -> Result<(usize, f64, Option<f64>), String> {
    let problem = problem.as_ref().map_err(Clone::clone)?;
    let variant: Variant = name
        .parse()
        .map_err(|e: sddp_reg_core::Error| e.to_string())?;
    let s = solver(suite.solver_tolerance);
    let start = Instant::now();
    let report = if variant.stochastic {
        let cfg = StochasticConfig {
            scheme: variant.scheme,
            paths_per_iteration: 1,
            stopping: stochastic_stopping(inst.stopping, &inst.problem.risk)
                .map_err(|e| e.to_string())?,
            seed: suite.seed,
        };
        run_sddp(problem, &inst.problem.risk, &cfg, &s)
    } else {
        let cfg = deterministic_config(inst.stopping).map_err(|e| e.to_string())?;
        run_deterministic(problem, variant.scheme, &cfg, &s)
    }
    .map_err(|e| e.to_string())?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let gap = match (report.final_lower_bound, report.final_upper_bound) {
        (Some(l), Some(u)) => Some((u - l) / u.abs().max(f64::MIN_POSITIVE)),
        _ => None,
    };
    Ok((report.iterations(), wall, gap))
}

fn baseline_name(variant: &str) -> Option<&'static str> {
    if variant.starts_with("REDDP-") {
        Some("DDP")
    } else if variant.starts_with("SDDP-REG-") {
        Some("SDDP")
    } else {
        None
    }
}

pub fn bench(suite_path: &Path, out: &Path, jobs: usize) -> Result<i32, CliError> {
    let bytes = std::fs::read(suite_path).map_err(CliError::io(suite_path))?;
    let suite: Suite = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: suite_path.into(),
        source,
    })?;
    let base = suite_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let problems: Vec<Result<MultistageProblem, String>> = suite
        .instances
        .iter()
        .map(|i| {
            build_problem(&i.problem, |p| {
                if p.is_absolute() {
                    p.into()
                } else {
                    base.join(p)
                }
            })
            .map_err(|e| e.to_string())
        })
        .collect();
    let tasks: Vec<(usize, &String)> = (0..suite.instances.len())
        .flat_map(|i| suite.variants.iter().map(move |v| (i, v)))
        .collect();
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::with_capacity(tasks.len()));
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, v)) = tasks.get(k) else { break };
                let result = bench_one(&suite, &suite.instances[i], &problems[i], v);
                if let Err(e) = &result {
                    log::error!("{} / {v}: {e}", suite.instances[i].name);
                }
                rows.lock().expect("no panics while held").push((
                    k,
                    BenchRow {
                        instance: i,
                        variant: v.clone(),
                        result,
                    },
                ));
            });
        }
    });
    let mut rows = rows.into_inner().expect("workers joined");
    rows.sort_by_key(|(k, _)| *k);
    let rows: Vec<BenchRow> = rows.into_iter().map(|(_, r)| r).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCH_HEADER.split(','))
        .expect("in-memory write");
    for row in &rows {
        let baseline = baseline_name(&row.variant).and_then(|b| {
            rows.iter()
                .find(|r| r.instance == row.instance && r.variant == b)
                .and_then(|r| r.result.as_ref().ok())
        });
        let name = &suite.instances[row.instance].name;
        let record = match &row.result {
            Ok((its, wall, gap)) => {
                let (it_ratio, t_ratio) = match (baseline, baseline_name(&row.variant)) {
                    (Some((b_its, b_wall, _)), _) => (
                        (*b_its as f64 / *its as f64).to_string(),
                        (b_wall / wall.max(f64::MIN_POSITIVE)).to_string(),
                    ),
                    (None, None) => ("1".into(), "1".into()),
                    (None, Some(_)) => (String::new(), String::new()),
                };
                vec![
                    name.clone(),
                    row.variant.clone(),
                    its.to_string(),
                    format!("{wall:.3}"),
                    gap.map(|g| g.to_string()).unwrap_or_default(),
                    it_ratio,
                    t_ratio,
                ]
            }
            Err(_) => vec![
                name.clone(),
                row.variant.clone(),
                "error".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        w.write_record(&record).expect("in-memory write");
    }
    atomic_write(
        &out.join("bench.csv"),
        &w.into_inner().expect("in-memory flush"),
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone)]
pub struct GenDataArgs {
    pub seed: u64,
    pub n: usize,
    pub horizon: usize,
    pub samples: usize,
    pub drift: f64,
    pub vol: f64,
    pub cash_return: f64,
    pub out: PathBuf,
}

/// Writes `returns.csv` (risky returns of stages 2..T+1) and `lattice.json`
/// (the direct-cost model's lattice, cash appended).
pub fn gen_data(args: &GenDataArgs) -> Result<i32, CliError> {
    let scenarios = generate_synthetic_returns(
        args.seed,
        args.n,
        args.horizon,
        args.samples,
        args.drift,
        args.vol,
    )?;
    let mut params = PortfolioParams::with_defaults(args.n, args.horizon);
    params.cash_return = args.cash_return;
    let problem = build_direct_cost_models(&params, &scenarios)?;
    atomic_write(&args.out.join("returns.csv"), &returns_csv(&scenarios))?;
    write_json(&args.out.join("lattice.json"), &problem.lattice)?;
    log::info!(
        "wrote {} stages x {} outcomes to {}",
        args.horizon,
        args.samples,
        args.out.display()
    );
    Ok(EXIT_OK)
}
