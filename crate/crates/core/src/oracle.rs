//! Extensive-form (deterministic equivalent) solves of small instances:
//! one decision copy per tree node, optionally with the nested mean-AV@R
//! recursion written through its variational form.

use alloc::format;
use alloc::vec::Vec;

use crate::conic::{AffineExpr, ConicProgram, ConicSolver, RotatedCone, SolverFailure};
use crate::lattice::DEFAULT_NODE_BUDGET;
use crate::model::StageInstance;
use crate::problem::{MultistageProblem, ResolvedProblem};
use crate::risk::RiskSpec;
use crate::{Error, Result};

/// Decision of one tree node; `path` holds the realization indices of
/// stages `1..=stage` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecision {
    pub stage: usize,
    pub path: Vec<usize>,
    pub decision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensiveSolution {
    /// Optimal value, internal (minimization) units.
    pub value: f64,
    /// Optimal value in reported units and sense.
    pub reported: f64,
    pub nodes: Vec<NodeDecision>,
}

struct Node {
    stage: usize,
    path: Vec<usize>,
    /// Offset of the node's decisions in the program.
    offset: usize,
    /// Value epigraph variable (risk-averse only).
    value_var: Option<usize>,
}

struct Builder<'a> {
    problem: &'a ResolvedProblem,
    risk: RiskSpec,
    program: ConicProgram,
    nodes: Vec<Node>,
}

impl<'a> Builder<'a> {
    fn add_stage_copy(
        &mut self,
        inst: &StageInstance,
        parent: Option<usize>,
        x_fixed: &[f64],
        weight: f64,
    ) -> usize {
        let offset = self.program.num_vars();
        for i in 0..inst.n_dec {
            self.program
                .add_var(inst.lower[i], inst.upper[i], weight * inst.objective[i]);
        }
        // Parent state indices in the program, or a constant incoming state.
        let parent_state: Option<Vec<usize>> = parent.map(|p| {
            let node = &self.nodes[p];
            let inst_p = &self.problem.instances[node.stage - 1][*node.path.last().unwrap()];
            inst_p.state.iter().map(|&s| node.offset + s).collect()
        });
        for (block, is_eq) in [(&inst.equalities, true), (&inst.inequalities, false)] {
            let mut rows: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); block.rows];
            let mut rhs = block.rhs.clone();
            for &(r, c, v) in &block.current {
                rows[r].push((offset + c, v));
            }
            for &(r, c, v) in &block.previous {
                match &parent_state {
                    Some(ps) => rows[r].push((ps[c], v)),
                    None => rhs[r] -= v * x_fixed[c],
                }
            }
            for (coeffs, b) in rows.into_iter().zip(rhs) {
                if is_eq {
                    self.program.add_eq(coeffs, b);
                } else {
                    self.program.add_le(coeffs, b);
                }
            }
        }
        let shift = |e: &AffineExpr| AffineExpr {
            terms: e.terms.iter().map(|&(i, c)| (offset + i, c)).collect(),
            constant: e.constant,
        };
        for cone in &inst.cones {
            self.program.add_cone(RotatedCone {
                u: shift(&cone.u),
                v: shift(&cone.v),
                w: cone.w.iter().map(shift).collect(),
            });
        }
        offset
    }

    /// Adds the subtree of stages `t..=T` under `parent` (or under the
    /// pinned state) and returns the indices of the stage-`t` nodes.
    fn add_children(
        &mut self,
        t: usize,
        parent: Option<usize>,
        x_fixed: &[f64],
        prefix: &[usize],
        prob: f64,
    ) -> Vec<usize> {
        let horizon = self.problem.horizon();
        let mut created = Vec::new();
        let probs = self.problem.probabilities[t - 1].clone();
        for (j, p) in probs.iter().enumerate() {
            let inst = &self.problem.instances[t - 1][j];
            let neutral = self.risk.is_neutral();
            let weight = if neutral { prob * p } else { 0.0 };
            let offset = self.add_stage_copy(inst, parent, x_fixed, weight);
            let mut path = prefix.to_vec();
            path.push(j);
            let value_var =
                (!neutral).then(|| self.program.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0));
            let idx = self.nodes.len();
            self.nodes.push(Node {
                stage: t,
                path: path.clone(),
                offset,
                value_var,
            });
            let children = if t < horizon {
                self.add_children(t + 1, Some(idx), x_fixed, &path, prob * p)
            } else {
                Vec::new()
            };
            if let Some(v) = value_var {
                // cᵀx_n + R_n ≤ V_n
                let mut coeffs: Vec<(usize, f64)> = inst
                    .objective
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (offset + i, *c))
                    .collect();
                if !children.is_empty() {
                    let r = self.risk_epigraph(&children, &self.problem.probabilities[t].clone());
                    coeffs.push((r, 1.0));
                }
                coeffs.push((v, -1.0));
                self.program.add_le(coeffs, 0.0);
            }
            created.push(idx);
        }
        created
    }

    /// Variable `R ≥ (1−λ)Σ p V_m + λ(u + (1/α)Σ p s_m)`, `s_m ≥ V_m − u`, `s_m ≥ 0`.
    fn risk_epigraph(&mut self, children: &[usize], probs: &[f64]) -> usize {
        let (lambda, alpha) = match self.risk {
            RiskSpec::MeanAvar { lambda, alpha } => (lambda, alpha),
            RiskSpec::Expectation => (0.0, 1.0),
        };
        let r = self.program.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let u = self.program.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let mut agg = alloc::vec![(r, -1.0), (u, lambda)];
        for (&m, &p) in children.iter().zip(probs) {
            let v = self.nodes[m]
                .value_var
                .expect("risk-averse nodes carry values");
            let s = self.program.add_var(0.0, f64::INFINITY, 0.0);
            self.program
                .add_le(alloc::vec![(v, 1.0), (u, -1.0), (s, -1.0)], 0.0);
            agg.push((v, (1.0 - lambda) * p));
            agg.push((s, lambda * p / alpha));
        }
        self.program.add_le(agg, 0.0);
        r
    }
}

fn map_failure(f: SolverFailure) -> Error {
    match f {
        SolverFailure::Infeasible => Error::Infeasible { stage: 0 },
        SolverFailure::Unbounded => Error::Unbounded { stage: 0 },
        SolverFailure::Numerical(message) => Error::SolverNumericalFailure { stage: 0, message },
    }
}

/// Solves the subtree of stages `from..=T` given `x_{from-1} = x_start`.
fn solve_forest<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    from: usize,
    x_start: &[f64],
    risk: &RiskSpec,
    node_budget: usize,
    solver: &S,
) -> Result<(f64, Vec<NodeDecision>)> {
    risk.validate()?;
    let resolved = problem.resolve()?;
    let nodes = problem.lattice.subtree_node_count(from);
    if nodes > node_budget as u128 {
        return Err(Error::TreeTooLarge {
            nodes,
            budget: node_budget,
        });
    }
    if x_start.len() != resolved.state_dim(from - 1) {
        return Err(Error::DimensionMismatch(format!(
            "pinned state has {} entries, stage {} state has {}",
            x_start.len(),
            from - 1,
            resolved.state_dim(from - 1)
        )));
    }
    let mut b = Builder {
        problem: &resolved,
        risk: *risk,
        program: ConicProgram::default(),
        nodes: Vec::new(),
    };
    let top = b.add_children(from, None, x_start, &[], 1.0);
    if !risk.is_neutral() {
        let probs = resolved.probabilities[from - 1].clone();
        let root = b.risk_epigraph(&top, &probs);
        b.program.objective[root] = 1.0;
    }
    let solved = solver.solve(&b.program).map_err(map_failure)?;
    let decisions = b
        .nodes
        .iter()
        .map(|n| {
            let n_dec = resolved.instances[n.stage - 1][0].n_dec;
            NodeDecision {
                stage: n.stage,
                path: n.path.clone(),
                decision: solved.x[n.offset..n.offset + n_dec].to_vec(),
            }
        })
        .collect();
    Ok((solved.objective, decisions))
}

/// Risk-neutral extensive form; `x_1` is a single node since stage 1 is
/// deterministic.
pub fn solve_extensive_risk_neutral<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    solver: &S,
) -> Result<ExtensiveSolution> {
    solve_extensive(problem, &RiskSpec::Expectation, DEFAULT_NODE_BUDGET, solver)
}

/// Nested mean-AV@R extensive form.
pub fn solve_extensive_risk_averse<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    lambda: f64,
    alpha: f64,
    solver: &S,
) -> Result<ExtensiveSolution> {
    solve_extensive(
        problem,
        &RiskSpec::mean_avar(lambda, alpha)?,
        DEFAULT_NODE_BUDGET,
        solver,
    )
}

pub fn solve_extensive<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    risk: &RiskSpec,
    node_budget: usize,
    solver: &S,
) -> Result<ExtensiveSolution> {
    let (value, nodes) = solve_forest(
        problem,
        1,
        &problem.initial_state,
        risk,
        node_budget,
        solver,
    )?;
    Ok(ExtensiveSolution {
        value,
        reported: problem.reported(value),
        nodes,
    })
}

/// True cost-to-go `Q_t(x_pinned)` (internal units) for `t = 2..=T+1`;
/// `Q_{T+1} = 0`.
pub fn evaluate_cost_to_go<S: ConicSolver + ?Sized>(
    problem: &MultistageProblem,
    t: usize,
    x_pinned: &[f64],
    risk: &RiskSpec,
    node_budget: usize,
    solver: &S,
) -> Result<f64> {
    let horizon = problem.horizon();
    if t < 2 || t > horizon + 1 {
        return Err(Error::ParameterOutOfRange(format!(
            "stage {t} outside 2..={}",
            horizon + 1
        )));
    }
    if t == horizon + 1 {
        return Ok(0.0);
    }
    Ok(solve_forest(problem, t, x_pinned, risk, node_budget, solver)?.0)
}

#[cfg(all(test, feature = "std"))]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Realization, ScenarioLattice};
    use crate::model::{Coef, StageModel};
    use crate::problem::Sense;
    use crate::risk::avar_value_oracle;
    use crate::ClarabelSolver;
    use alloc::string::ToString;
    use alloc::vec;

    fn r(v: f64) -> Realization {
        [("ret".to_string(), v)].into_iter().collect()
    }

    /// Stage 1 splits one unit between cash (x0) and a risky asset (x1);
    /// stage 2 collects wealth w = x0 + ξ·x1 and earns −w.
    fn two_stage(returns: &[f64], probs: &[f64]) -> MultistageProblem {
        let mut s1 = StageModel::new(2, 0.0, 1.0);
        s1.state = vec![0, 1];
        let row = s1.equalities.push_row(1.0);
        s1.equalities.set_current(row, 0, 1.0);
        s1.equalities.set_current(row, 1, 1.0);
        let mut s2 = StageModel::new(1, 0.0, 2.0);
        s2.objective = vec![Coef::Const(-1.0)];
        let row = s2.equalities.push_row(0.0);
        s2.equalities.set_current(row, 0, 1.0);
        s2.equalities.set_previous(row, 0, -1.0);
        s2.equalities.set_previous(row, 1, Coef::field("ret", -1.0));
        let lattice = build_lattice(
            vec![vec![r(1.0)], returns.iter().map(|&v| r(v)).collect()],
            vec![vec![1.0], probs.to_vec()],
        )
        .unwrap();
        MultistageProblem {
            stages: vec![s1, s2],
            lattice,
            initial_state: vec![],
            lower_bounds: vec![-10.0],
            sense: Sense::Maximize,
            value_scale: 1.0,
        }
    }

    #[test]
    fn two_scenario_investment() {
        let p = two_stage(&[1.2, 0.9], &[0.5, 0.5]);
        let sol = solve_extensive_risk_neutral(&p, &ClarabelSolver::default()).unwrap();
        assert!((sol.reported - 1.05).abs() < 1e-8);
        assert!((sol.nodes[0].decision[1] - 1.0).abs() < 1e-6);
        assert_eq!(sol.nodes.len(), 3);
    }

    #[test]
    fn degenerate_risk_matches_neutral() {
        let p = two_stage(&[1.3, 0.8, 1.05], &[0.2, 0.3, 0.5]);
        let solver = ClarabelSolver::default();
        let neutral = solve_extensive_risk_neutral(&p, &solver).unwrap().value;
        for (l, a) in [(0.0, 0.3), (0.6, 1.0)] {
            let v = solve_extensive_risk_averse(&p, l, a, &solver)
                .unwrap()
                .value;
            assert!((v - neutral).abs() < 1e-8, "{l} {a}: {v} vs {neutral}");
        }
    }

    #[test]
    fn risk_averse_two_scenario_value() {
        // Loss −w; all-cash gives −1 everywhere, all-risky gives {−1.2, −0.9}.
        // ρ(all risky) = 0.5·(−1.05) + 0.5·(−0.9) = −0.975 > −1: hold cash.
        let p = two_stage(&[1.2, 0.9], &[0.5, 0.5]);
        let v = solve_extensive_risk_averse(&p, 0.5, 0.5, &ClarabelSolver::default())
            .unwrap()
            .value;
        assert!((v + 1.0).abs() < 1e-8);
        // Against the grid oracle for a fixed split x1 = 0.4.
        let losses: Vec<f64> = [1.2, 0.9].iter().map(|xi| -(0.6 + 0.4 * xi)).collect();
        let mean = losses.iter().sum::<f64>() / 2.0;
        let expected = 0.5 * mean + 0.5 * avar_value_oracle(&losses, &[0.5, 0.5], 0.5);
        let q = evaluate_cost_to_go(
            &p,
            2,
            &[0.6, 0.4],
            &RiskSpec::mean_avar(0.5, 0.5).unwrap(),
            DEFAULT_NODE_BUDGET,
            &ClarabelSolver::default(),
        )
        .unwrap();
        assert!((q - expected).abs() < 1e-8);
    }

    #[test]
    fn cost_to_go_edges() {
        let p = two_stage(&[1.2, 0.9], &[0.5, 0.5]);
        let s = ClarabelSolver::default();
        assert_eq!(
            evaluate_cost_to_go(&p, 3, &[0.0], &RiskSpec::Expectation, 100, &s).unwrap(),
            0.0
        );
        let q = evaluate_cost_to_go(&p, 2, &[0.5, 0.5], &RiskSpec::Expectation, 100, &s).unwrap();
        assert!((q + 1.025).abs() < 1e-8);
        let single = two_stage(&[1.1], &[1.0]);
        let q =
            evaluate_cost_to_go(&single, 2, &[0.0, 1.0], &RiskSpec::Expectation, 100, &s).unwrap();
        assert!((q + 1.1).abs() < 1e-8);
    }

    #[test]
    fn node_budget_guard() {
        let lattice = ScenarioLattice::deterministic(vec![r(1.0); 2]).unwrap();
        let mut p = two_stage(&[1.0], &[1.0]);
        p.lattice = lattice;
        assert!(matches!(
            solve_extensive(&p, &RiskSpec::Expectation, 1, &ClarabelSolver::default()),
            Err(Error::TreeTooLarge { .. })
        ));
    }
}
