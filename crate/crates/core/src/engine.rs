//! Forward and backward passes shared by the deterministic and stochastic
//! drivers. A deterministic problem is the single-realization lattice, so
//! both drivers produce the same cuts on it.

use alloc::vec::Vec;

use crate::conic::ConicSolver;
use crate::cuts::CutPool;
use crate::problem::ResolvedProblem;
use crate::prox::ProxScheme;
use crate::risk::{aggregate, RiskSpec};
use crate::stage::{cut_from_solution, solve_stage, ProxTerm};
use crate::Result;

pub(crate) struct ForwardPass {
    /// `x_1..x_T`, full decision vectors.
    pub decisions: Vec<Vec<f64>>,
    /// State parts of `decisions`.
    pub states: Vec<Vec<f64>>,
    /// Σ stage costs, internal units.
    pub cost: f64,
}

pub(crate) struct Engine<'a, S: ?Sized> {
    pub problem: &'a ResolvedProblem,
    pub solver: &'a S,
    pub risk: RiskSpec,
    pub scheme: ProxScheme,
    pub pools: Vec<CutPool>,
    /// Trial points `x_t^1, x_t^2, ...` for `t = 1..T-1`.
    history: Vec<Vec<Vec<f64>>>,
}

impl<'a, S: ConicSolver + ?Sized> Engine<'a, S> {
    pub fn new(
        problem: &'a ResolvedProblem,
        solver: &'a S,
        risk: RiskSpec,
        scheme: ProxScheme,
    ) -> Self {
        let horizon = problem.horizon();
        Engine {
            problem,
            solver,
            risk,
            scheme,
            pools: problem.empty_pools(),
            history: alloc::vec![Vec::new(); horizon.saturating_sub(1)],
        }
    }

    pub fn horizon(&self) -> usize {
        self.problem.horizon()
    }

    /// Approximation of `Q_{t+1}` used inside stage `t`.
    pub fn pool_after(&self, t: usize) -> Option<&CutPool> {
        (t < self.horizon()).then(|| &self.pools[t - 1])
    }

    /// Prox term for stage `t` at iteration `k`, if the weight is positive.
    pub fn prox(&self, t: usize, k: usize) -> Result<Option<ProxTerm>> {
        let weight = self.scheme.penalty_weight(t, k, self.horizon());
        if weight <= 0.0 {
            return Ok(None);
        }
        let center = self.scheme.prox_center(&self.history[t - 1])?;
        Ok(Some(ProxTerm { center, weight }))
    }

    /// Solves stage `t`, realization `j`, from `x_prev`.
    pub fn solve_node(
        &self,
        t: usize,
        j: usize,
        x_prev: &[f64],
        prox: Option<&ProxTerm>,
    ) -> Result<crate::stage::StageSolution> {
        solve_stage(
            self.solver,
            &self.problem.instances[t - 1][j],
            x_prev,
            self.pool_after(t),
            prox,
        )
        .map_err(|e| e.at_stage(t))
    }

    /// Forward pass along `path` (0-based realization indices, one per stage).
    /// With `regularize = false` no prox term is used.
    pub fn forward(&self, path: &[usize], k: usize, regularize: bool) -> Result<ForwardPass> {
        let horizon = self.horizon();
        let mut decisions = Vec::with_capacity(horizon);
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        let mut cost = 0.0;
        for t in 1..=horizon {
            let prox = if regularize { self.prox(t, k)? } else { None };
            let x_prev = states.last().unwrap_or(&self.problem.initial_state);
            let sol = self.solve_node(t, path[t - 1], x_prev, prox.as_ref())?;
            cost += sol.stage_cost;
            states.push(sol.state);
            decisions.push(sol.decision);
        }
        Ok(ForwardPass {
            decisions,
            states,
            cost,
        })
    }

    /// Appends this iteration's trial points (averaged over paths) to the
    /// prox history.
    pub fn record_history(&mut self, passes: &[&[Vec<f64>]]) {
        let n = passes.len() as f64;
        for (t, hist) in self.history.iter_mut().enumerate() {
            let mut mean = alloc::vec![0.0; passes[0][t].len()];
            for states in passes {
                for (m, v) in mean.iter_mut().zip(&states[t]) {
                    *m += v;
                }
            }
            if passes.len() > 1 {
                mean.iter_mut().for_each(|m| *m /= n);
            }
            hist.push(mean);
        }
    }

    /// Adds one cut per stage `t = T..2` at the trial states `x_1..x_{T-1}`,
    /// each built against the already-updated `Q_{t+1}`.
    pub fn backward(&mut self, states: &[Vec<f64>], k: usize) -> Result<()> {
        for t in (2..=self.horizon()).rev() {
            let trial = &states[t - 2];
            let (value, slope) = self.stage_cut(t, trial)?;
            self.pools[t - 2].add_cut(value, slope, trial.clone(), k)?;
        }
        Ok(())
    }

    /// Risk-aggregated value and subgradient of the stage-`t` approximate
    /// value function at `trial` (a state of stage `t-1`).
    pub fn stage_cut(&self, t: usize, trial: &[f64]) -> Result<(f64, Vec<f64>)> {
        let probs = &self.problem.probabilities[t - 1];
        let dim = trial.len();
        let mut values = Vec::with_capacity(probs.len());
        let mut slopes = Vec::with_capacity(probs.len());
        for j in 0..probs.len() {
            let sol = self.solve_node(t, j, trial, None)?;
            let (v, b) = cut_from_solution(&self.problem.instances[t - 1][j], &sol, dim)?;
            values.push(v);
            slopes.push(b);
        }
        let (value, weights) = aggregate(&values, probs, &self.risk)?;
        let mut slope = alloc::vec![0.0; dim];
        for (w, b) in weights.iter().zip(&slopes) {
            for (s, bi) in slope.iter_mut().zip(b) {
                *s += w * bi;
            }
        }
        Ok((value, slope))
    }

    /// First-stage value of the approximate problem: a lower bound on the
    /// optimal value (internal units).
    pub fn lower_bound(&self) -> Result<f64> {
        Ok(self
            .solve_node(1, 0, &self.problem.initial_state, None)?
            .dual_bound)
    }

    pub fn cut_counts(&self) -> Vec<usize> {
        self.pools.iter().map(CutPool::len).collect()
    }
}
