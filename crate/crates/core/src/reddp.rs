//! Deterministic DDP and REDDP.

use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::now_ms;
use crate::conic::ConicSolver;
use crate::engine::Engine;
use crate::problem::{MultistageProblem, Sense};
use crate::prox::{ProxScheme, Variant};
use crate::report::{IterationRecord, SolveReport, Termination};
use crate::risk::RiskSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `UB − LB ≤ ε·max(1, |UB|)`.
    #[default]
    Relative,
    /// `UB − LB ≤ ε`.
    Absolute,
}

impl GapMode {
    pub fn closed(self, lower: f64, upper: f64, epsilon: f64) -> bool {
        let scale = match self {
            GapMode::Relative => upper.abs().max(1.0),
            GapMode::Absolute => 1.0,
        };
        upper - lower <= epsilon * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub gap_mode: GapMode,
    pub max_iter: usize,
}

impl Default for DeterministicConfig {
    fn default() -> Self {
        DeterministicConfig {
            epsilon: 1e-6,
            gap_mode: GapMode::Relative,
            max_iter: 1000,
        }
    }
}

/// Runs DDP (`scheme` = [`ProxScheme::NONE`]) or REDDP on a problem whose
/// lattice has a single realization per stage.
pub fn run_deterministic<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    scheme: ProxScheme,
    config: &DeterministicConfig,
    solver: &S,
) -> Result<SolveReport> {
    scheme.validate()?;
    if !problem.lattice.is_deterministic() {
        return Err(Error::InvalidModel(
            "the deterministic driver needs one realization per stage".to_string(),
        ));
    }
    if config.max_iter == 0 {
        return Err(Error::ParameterOutOfRange(
            "max_iter must be at least 1".to_string(),
        ));
    }
    let resolved = problem.resolve()?;
    let mut engine = Engine::new(&resolved, solver, RiskSpec::Expectation, scheme);
    let path = alloc::vec![0; resolved.horizon()];
    let mut records = Vec::new();
    let mut trajectory = Vec::new();
    let mut termination = Termination::IterationLimit;
    for k in 1..=config.max_iter {
        let start = now_ms();
        let pass = engine.forward(&path, k, true)?;
        let mid = now_ms();
        engine.record_history(&[&pass.states]);
        engine.backward(&pass.states, k)?;
        let bound = engine.lower_bound()?;
        let end = now_ms();
        let (lower, upper) = match resolved.sense {
            Sense::Minimize => (resolved.reported(bound), resolved.reported(pass.cost)),
            Sense::Maximize => (resolved.reported(pass.cost), resolved.reported(bound)),
        };
        records.push(IterationRecord {
            iteration: k,
            lower_bound: Some(lower),
            upper_bound: Some(upper),
            gap: Some(upper - lower),
            forward_ms: mid - start,
            backward_ms: end - mid,
            deterministic_bound: bound,
        });
        trajectory = pass.decisions;
        if config.gap_mode.closed(lower, upper, config.epsilon) {
            termination = Termination::Gap;
            break;
        }
    }
    let last = records.last().expect("at least one iteration");
    Ok(SolveReport {
        variant: Variant {
            stochastic: false,
            scheme,
        }
        .to_string(),
        seed: None,
        termination,
        final_lower_bound: last.lower_bound,
        final_upper_bound: last.upper_bound,
        records,
        trajectory,
        cut_counts: engine.cut_counts(),
        simulation: None,
        warnings: Vec::new(),
        pools: engine.pools,
    })
}

#[cfg(all(test, feature = "std"))]
mod tests {
    use super::*;
    use crate::lattice::{Realization, ScenarioLattice};
    use crate::model::{Coef, StageModel};
    use crate::prox::{CenterRule, PenaltyRule};
    use crate::ClarabelSolver;
    use alloc::vec;

    /// min −x_3 with x_1 ∈ [0,1], x_2 = 1.1·x_1 ∈ [0,2], x_3 = 1.1·x_2 ∈ [0,2].
    fn chain() -> MultistageProblem {
        let mut stages = Vec::new();
        let mut first = StageModel::new(1, 0.0, 1.0);
        first.state = vec![0];
        stages.push(first);
        for t in 2..=3 {
            let mut m = StageModel::new(1, 0.0, 2.0);
            m.state = vec![0];
            let r = m.equalities.push_row(0.0);
            m.equalities.set_current(r, 0, 1.0);
            m.equalities.set_previous(r, 0, -1.1);
            if t == 3 {
                m.objective[0] = Coef::Const(-1.0);
            }
            stages.push(m);
        }
        MultistageProblem {
            stages,
            lattice: ScenarioLattice::deterministic(vec![Realization::new(); 3]).unwrap(),
            initial_state: vec![],
            lower_bounds: vec![-10.0, -10.0],
            sense: Sense::Minimize,
            value_scale: 1.0,
        }
    }

    #[test]
    fn chain_reaches_optimum() {
        let solver = ClarabelSolver::default();
        for scheme in [
            ProxScheme::NONE,
            ProxScheme::new(CenterRule::Prev, PenaltyRule::Reg2).unwrap(),
            ProxScheme::new(CenterRule::Avg, PenaltyRule::Reg1 { rho: 0.9 }).unwrap(),
        ] {
            let report =
                run_deterministic(&chain(), scheme, &DeterministicConfig::default(), &solver)
                    .unwrap();
            assert_eq!(report.termination, Termination::Gap);
            assert!((report.final_lower_bound.unwrap() + 1.21).abs() < 1e-6);
            assert!((report.final_upper_bound.unwrap() + 1.21).abs() < 1e-6);
            assert!((report.trajectory[0][0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_stage_closes_at_once() {
        let mut m = StageModel::new(2, 0.0, 1.0);
        m.objective = vec![Coef::Const(1.0), Coef::Const(-2.0)];
        let problem = MultistageProblem {
            stages: vec![m],
            lattice: ScenarioLattice::deterministic(vec![Realization::new()]).unwrap(),
            initial_state: vec![],
            lower_bounds: vec![],
            sense: Sense::Minimize,
            value_scale: 1.0,
        };
        let report = run_deterministic(
            &problem,
            ProxScheme::NONE,
            &DeterministicConfig::default(),
            &ClarabelSolver::default(),
        )
        .unwrap();
        assert_eq!(report.iterations(), 1);
        assert!(report.last().unwrap().gap.unwrap().abs() < 1e-8);
    }

    #[test]
    fn zero_penalty_matches_ddp_cut_for_cut() {
        let solver = ClarabelSolver::default();
        let cfg = DeterministicConfig::default();
        let ddp = run_deterministic(&chain(), ProxScheme::NONE, &cfg, &solver).unwrap();
        let zero = ProxScheme::new(CenterRule::Avg, PenaltyRule::Zero).unwrap();
        let other = run_deterministic(&chain(), zero, &cfg, &solver).unwrap();
        assert_eq!(ddp.pools, other.pools);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let cfg = DeterministicConfig {
            max_iter: 1,
            ..Default::default()
        };
        let report =
            run_deterministic(&chain(), ProxScheme::NONE, &cfg, &ClarabelSolver::default())
                .unwrap();
        assert_eq!(report.termination, Termination::IterationLimit);
    }
}
