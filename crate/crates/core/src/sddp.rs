//! Stochastic drivers: SDDP / SDDP-REG on sampled paths and the full-tree
//! forward mode, with policy simulation for statistical bounds.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::now_ms;
use crate::conic::ConicSolver;
use crate::cuts::CutPool;
use crate::engine::Engine;
use crate::lattice::DEFAULT_NODE_BUDGET;
use crate::problem::{MultistageProblem, ResolvedProblem, Sense};
use crate::prox::{ProxScheme, Variant};
use crate::report::{IterationRecord, PolicySimulation, SolveReport, Termination};
use crate::risk::RiskSpec;
use crate::stats::{mean_stderr, normal_quantile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stopping {
    /// Stop when `(Ub − Lb)/Ub < threshold`, the statistical side coming from
    /// `n_sim` simulated policy paths every `check_every` iterations.
    Gap {
        threshold: f64,
        #[serde(default = "default_n_sim")]
        n_sim: usize,
        #[serde(default = "default_confidence")]
        confidence: f64,
        #[serde(default = "default_check_every")]
        check_every: usize,
        max_iter: usize,
    },
    FixedIterations {
        iterations: usize,
    },
}

fn default_n_sim() -> usize {
    500
}
fn default_confidence() -> f64 {
    0.95
}
fn default_check_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub scheme: ProxScheme,
    #[serde(default = "one")]
    pub paths_per_iteration: usize,
    pub stopping: Stopping,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl StochasticConfig {
    pub fn validate(&self, risk: &RiskSpec) -> Result<()> {
        self.scheme.validate()?;
        risk.validate()?;
        if self.paths_per_iteration == 0 {
            return Err(Error::ParameterOutOfRange(
                "paths_per_iteration must be >= 1".into(),
            ));
        }
        match self.stopping {
            Stopping::Gap {
                threshold,
                n_sim,
                confidence,
                check_every,
                max_iter,
            } => {
                if !(threshold > 0.0 && threshold < 1.0) {
                    return Err(Error::ParameterOutOfRange(format!(
                        "gap threshold {threshold} not in (0, 1)"
                    )));
                }
                if n_sim < 2 {
                    return Err(Error::ParameterOutOfRange("n_sim must be >= 2".into()));
                }
                if !(confidence > 0.5 && confidence < 1.0) {
                    return Err(Error::ParameterOutOfRange(format!(
                        "confidence {confidence} not in (0.5, 1)"
                    )));
                }
                if check_every == 0 || max_iter == 0 {
                    return Err(Error::ParameterOutOfRange(
                        "check_every and max_iter must be >= 1".into(),
                    ));
                }
                if !risk.is_neutral() {
                    return Err(Error::ParameterOutOfRange(
                        "gap stopping needs a risk-neutral measure; use fixed_iterations".into(),
                    ));
                }
            }
            Stopping::FixedIterations { iterations } => {
                if iterations == 0 {
                    return Err(Error::ParameterOutOfRange("iterations must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    fn max_iter(&self) -> usize {
        match self.stopping {
            Stopping::Gap { max_iter, .. } => max_iter,
            Stopping::FixedIterations { iterations } => iterations,
        }
    }
}

/// Seed of the `i`-th policy simulation batch drawn at iteration `k`.
fn simulation_seed(seed: u64, k: usize) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1))
}

/// Evaluates the policy induced by `pools` (no prox) on `n_sim` sampled
/// paths. Path `i` uses stream `i` of a ChaCha8 generator seeded with `seed`.
pub fn simulate_policy<S: ConicSolver + ?Sized>(
    problem: &ResolvedProblem,
    pools: &[CutPool],
    n_sim: usize,
    seed: u64,
    confidence: f64,
    solver: &S,
) -> Result<PolicySimulation> {
    let mut engine = Engine::new(problem, solver, RiskSpec::Expectation, ProxScheme::NONE);
    engine.pools = pools.to_vec();
    let mut values = Vec::with_capacity(n_sim);
    for i in 0..n_sim {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let path = problem.sample_path(&mut rng);
        let pass = engine.forward(&path, 1, false)?;
        values.push(problem.reported(pass.cost));
    }
    let (mean, stderr) = mean_stderr(&values);
    let z = normal_quantile(confidence);
    let confidence_bound = match problem.sense {
        Sense::Maximize => mean - z * stderr,
        Sense::Minimize => mean + z * stderr,
    };
    Ok(PolicySimulation {
        values,
        mean,
        stderr,
        confidence_bound,
        confidence,
    })
}

/// Expected cost, then decisions and states along the sampled path.
type TreePass = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Forward pass over every tree node. Returns the expected stage cost and
/// the decisions and states along `path`.
fn full_tree_forward<S: ConicSolver + ?Sized>(
    engine: &Engine<'_, S>,
    path: &[usize],
    k: usize,
) -> Result<TreePass> {
    let horizon = engine.horizon();
    let probs = &engine.problem.probabilities;
    let proxes = (1..=horizon)
        .map(|t| engine.prox(t, k))
        .collect::<Result<Vec<_>>>()?;
    // Depth-first over (stage, node) with the incoming state and node probability.
    let mut expected = 0.0;
    let mut path_decisions = Vec::with_capacity(horizon);
    let mut path_states = Vec::with_capacity(horizon);
    struct Frame {
        t: usize,
        j: usize,
        x_prev: Vec<f64>,
        prob: f64,
        on_path: bool,
    }
    let mut stack = alloc::vec![Frame {
        t: 1,
        j: 0,
        x_prev: engine.problem.initial_state.clone(),
        prob: 1.0,
        on_path: true,
    }];
    while let Some(f) = stack.pop() {
        let sol = engine.solve_node(f.t, f.j, &f.x_prev, proxes[f.t - 1].as_ref())?;
        expected += f.prob * sol.stage_cost;
        if f.t < horizon {
            for (m, p) in probs[f.t].iter().enumerate().rev() {
                stack.push(Frame {
                    t: f.t + 1,
                    j: m,
                    x_prev: sol.state.clone(),
                    prob: f.prob * p,
                    on_path: f.on_path && path[f.t] == m,
                });
            }
        }
        if f.on_path {
            path_states.push(sol.state);
            path_decisions.push(sol.decision);
        }
    }
    Ok((expected, path_decisions, path_states))
}

#[derive(Clone, Copy, PartialEq)]
enum ForwardMode {
    Sampled,
    FullTree,
}

/// SDDP (`scheme` = none) or SDDP-REG along sampled paths.
pub fn run_sddp<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    risk: &RiskSpec,
    config: &StochasticConfig,
    solver: &S,
) -> Result<SolveReport> {
    run(problem, risk, config, solver, ForwardMode::Sampled)
}

/// The forward pass visits every node of the tree (shared per-stage prox
/// centers) and the exact expected cost of the forward policy serves as the
/// statistical side for risk-neutral gap stopping.
pub fn run_sreda_fulltree<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    risk: &RiskSpec,
    config: &StochasticConfig,
    node_budget: usize,
    solver: &S,
) -> Result<SolveReport> {
    let nodes = problem.lattice.subtree_node_count(1);
    if nodes > node_budget as u128 {
        return Err(Error::TreeTooLarge {
            nodes,
            budget: node_budget,
        });
    }
    run(problem, risk, config, solver, ForwardMode::FullTree)
}

/// [`run_sreda_fulltree`] with the default node budget.
pub fn run_sreda_fulltree_default<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    risk: &RiskSpec,
    config: &StochasticConfig,
    solver: &S,
) -> Result<SolveReport> {
    run_sreda_fulltree(problem, risk, config, DEFAULT_NODE_BUDGET, solver)
}

fn run<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    risk: &RiskSpec,
    config: &StochasticConfig,
    solver: &S,
    mode: ForwardMode,
) -> Result<SolveReport> {
    config.validate(risk)?;
    let resolved = problem.resolve()?;
    let mut engine = Engine::new(&resolved, solver, *risk, config.scheme);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut trajectory = Vec::new();
    let mut simulation = None;
    let mut termination = match config.stopping {
        Stopping::Gap { .. } => Termination::IterationLimit,
        Stopping::FixedIterations { .. } => Termination::IterationBudget,
    };
    let (mut final_lower, mut final_upper) = (None, None);

    for k in 1..=config.max_iter() {
        let start = now_ms();
        let mut passes = Vec::with_capacity(config.paths_per_iteration);
        let mut tree_cost = None;
        for _ in 0..config.paths_per_iteration {
            let path = resolved.sample_path(&mut rng);
            match mode {
                ForwardMode::Sampled => {
                    let pass = engine.forward(&path, k, true)?;
                    passes.push((pass.decisions, pass.states));
                }
                ForwardMode::FullTree => {
                    let (cost, decisions, states) = full_tree_forward(&engine, &path, k)?;
                    tree_cost.get_or_insert(cost);
                    passes.push((decisions, states));
                }
            }
        }
        let mid = now_ms();
        let state_refs: Vec<&[Vec<f64>]> = passes.iter().map(|(_, s)| s.as_slice()).collect();
        engine.record_history(&state_refs);
        for (_, states) in &passes {
            engine.backward(states, k)?;
        }
        let bound = engine.lower_bound()?;
        let end = now_ms();
        trajectory = passes.swap_remove(0).0;

        // Statistical side of the gap, when available this iteration.
        let mut statistical = None;
        if let Stopping::Gap {
            n_sim,
            confidence,
            check_every,
            ..
        } = config.stopping
        {
            if k % check_every == 0 {
                statistical = Some(match tree_cost {
                    Some(cost) => resolved.reported(cost),
                    None => {
                        let sim = simulate_policy(
                            &resolved,
                            &engine.pools,
                            n_sim,
                            simulation_seed(config.seed, k),
                            confidence,
                            solver,
                        )?;
                        let b = sim.confidence_bound;
                        simulation = Some(sim);
                        b
                    }
                });
            }
        }
        let deterministic = resolved.reported(bound);
        let (lower, upper) = match resolved.sense {
            Sense::Minimize => (Some(deterministic), statistical),
            Sense::Maximize => (statistical, Some(deterministic)),
        };
        records.push(IterationRecord {
            iteration: k,
            lower_bound: lower,
            upper_bound: upper,
            gap: lower.zip(upper).map(|(l, u)| u - l),
            forward_ms: mid - start,
            backward_ms: end - mid,
            deterministic_bound: bound,
        });
        final_lower = lower.or(final_lower);
        final_upper = upper.or(final_upper);
        if let (Some(l), Some(u), Stopping::Gap { threshold, .. }) = (lower, upper, config.stopping)
        {
            if u <= 0.0 {
                warnings.push(format!(
                    "iteration {k}: upper bound {u} <= 0, relative gap undefined"
                ));
            } else if (u - l) / u < threshold {
                termination = Termination::Gap;
                break;
            }
        }
    }
    Ok(SolveReport {
        variant: Variant {
            stochastic: true,
            scheme: config.scheme,
        }
        .to_string(),
        seed: Some(config.seed),
        termination,
        records,
        trajectory,
        cut_counts: engine.cut_counts(),
        final_lower_bound: final_lower,
        final_upper_bound: final_upper,
        simulation,
        warnings,
        pools: engine.pools,
    })
}

#[cfg(all(test, feature = "std"))]
mod tests {
    use super::*;
    use crate::oracle::solve_extensive;
    use crate::portfolio::{build_direct_cost_models, generate_synthetic_returns, PortfolioParams};
    use crate::prox::{CenterRule, PenaltyRule};
    use crate::reddp::{run_deterministic, DeterministicConfig};
    use crate::ClarabelSolver;

    fn portfolio(horizon: usize, m: usize, seed: u64) -> MultistageProblem {
        let mut p = PortfolioParams::with_defaults(2, horizon);
        p.budget = 1.0;
        let scen = generate_synthetic_returns(seed, 2, horizon, m, 0.01, 0.08).unwrap();
        build_direct_cost_models(&p, &scen).unwrap()
    }

    fn fixed(scheme: ProxScheme, iterations: usize) -> StochasticConfig {
        StochasticConfig {
            scheme,
            paths_per_iteration: 1,
            stopping: Stopping::FixedIterations { iterations },
            seed: 7,
        }
    }

    fn bounds(r: &SolveReport) -> Vec<f64> {
        r.records.iter().map(|x| x.deterministic_bound).collect()
    }

    #[test]
    fn single_scenario_matches_deterministic_driver() {
        let problem = portfolio(3, 1, 1);
        let solver = ClarabelSolver::default();
        let scheme = ProxScheme::new(CenterRule::Prev, PenaltyRule::Reg2).unwrap();
        let det =
            run_deterministic(&problem, scheme, &DeterministicConfig::default(), &solver).unwrap();
        let sto = run_sddp(
            &problem,
            &RiskSpec::Expectation,
            &fixed(scheme, det.iterations()),
            &solver,
        )
        .unwrap();
        assert_eq!(det.pools, sto.pools);
    }

    #[test]
    fn zero_penalty_reproduces_sddp() {
        let problem = portfolio(3, 2, 2);
        let solver = ClarabelSolver::default();
        let plain = run_sddp(
            &problem,
            &RiskSpec::Expectation,
            &fixed(ProxScheme::NONE, 8),
            &solver,
        )
        .unwrap();
        let zero = ProxScheme::new(CenterRule::Avg, PenaltyRule::Zero).unwrap();
        let reg = run_sddp(&problem, &RiskSpec::Expectation, &fixed(zero, 8), &solver).unwrap();
        assert_eq!(bounds(&plain), bounds(&reg));
        assert_eq!(plain.pools, reg.pools);
    }

    #[test]
    fn converges_to_extensive_form() {
        let problem = portfolio(3, 2, 3);
        let solver = ClarabelSolver::default();
        let oracle = solve_extensive(
            &problem,
            &RiskSpec::Expectation,
            DEFAULT_NODE_BUDGET,
            &solver,
        )
        .unwrap();
        for scheme in [
            ProxScheme::NONE,
            ProxScheme::new(CenterRule::Prev, PenaltyRule::Reg2).unwrap(),
        ] {
            let report = run_sddp(
                &problem,
                &RiskSpec::Expectation,
                &fixed(scheme, 30),
                &solver,
            )
            .unwrap();
            let lb = report.records.last().unwrap().deterministic_bound;
            assert!((lb - oracle.value).abs() < 1e-6, "{lb} vs {}", oracle.value);
            for w in bounds(&report).windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }

    #[test]
    fn full_tree_mode_converges() {
        let problem = portfolio(3, 2, 4);
        let solver = ClarabelSolver::default();
        let oracle = solve_extensive(
            &problem,
            &RiskSpec::Expectation,
            DEFAULT_NODE_BUDGET,
            &solver,
        )
        .unwrap();
        let scheme = ProxScheme::new(CenterRule::Avg, PenaltyRule::Reg2).unwrap();
        let report = run_sreda_fulltree_default(
            &problem,
            &RiskSpec::Expectation,
            &fixed(scheme, 30),
            &solver,
        )
        .unwrap();
        assert!((report.records.last().unwrap().deterministic_bound - oracle.value).abs() < 1e-6);
        let tight = run_sreda_fulltree(
            &problem,
            &RiskSpec::Expectation,
            &fixed(scheme, 1),
            3,
            &solver,
        );
        assert!(matches!(tight, Err(Error::TreeTooLarge { .. })));
    }

    #[test]
    fn gap_stopping_and_simulation_are_reproducible() {
        let problem = portfolio(3, 3, 5);
        let solver = ClarabelSolver::default();
        let cfg = StochasticConfig {
            scheme: ProxScheme::NONE,
            paths_per_iteration: 2,
            stopping: Stopping::Gap {
                threshold: 0.01,
                n_sim: 50,
                confidence: 0.95,
                check_every: 1,
                max_iter: 40,
            },
            seed: 11,
        };
        let a = run_sddp(&problem, &RiskSpec::Expectation, &cfg, &solver).unwrap();
        let b = run_sddp(&problem, &RiskSpec::Expectation, &cfg, &solver).unwrap();
        assert_eq!(a.termination, Termination::Gap);
        assert_eq!(a.simulation, b.simulation);
        assert_eq!(bounds(&a), bounds(&b));
        assert!(a.last().unwrap().gap_pct().unwrap() < 1.0);
    }

    #[test]
    fn gap_stopping_rejects_risk_aversion() {
        let cfg = StochasticConfig {
            scheme: ProxScheme::NONE,
            paths_per_iteration: 1,
            stopping: Stopping::Gap {
                threshold: 0.05,
                n_sim: 10,
                confidence: 0.95,
                check_every: 1,
                max_iter: 5,
            },
            seed: 0,
        };
        let risk = RiskSpec::mean_avar(0.1, 0.1).unwrap();
        assert!(matches!(
            cfg.validate(&risk),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert!(cfg.validate(&RiskSpec::Expectation).is_ok());
    }

    #[test]
    fn simulation_seeds_differ_per_iteration() {
        assert_ne!(simulation_seed(1, 1), simulation_seed(1, 2));
        assert_eq!(simulation_seed(1, 3), simulation_seed(1, 3));
    }
}
