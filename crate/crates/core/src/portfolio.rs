//! Portfolio rebalancing models with proportional transaction costs or
//! 3/2-power market impact costs, and their return data.
//!
//! Amounts are normalized by the budget internally (`value_scale = budget`).
//! Market impact costs `m·g^{3/2}` are stated on these normalized amounts,
//! so `m = 3e-4` charges three basis points on a trade of the full budget.
//! Wealth is maximized; the models minimize its negative.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conic::{AffineExpr, ConicProgram, ConicSolver, RotatedCone};
use crate::lattice::{build_lattice, Realization};
use crate::model::{Coef, RotatedConeBlock, StageModel, VarBlock};
use crate::problem::{MultistageProblem, Sense};
use crate::{Error, Result};

pub const DEFAULT_BUDGET: f64 = 1e9;
pub const DEFAULT_ASSETS: usize = 6;
pub const DEFAULT_COST: f64 = 0.01;
pub const DEFAULT_CASH_RETURN: f64 = 1.002;
pub const DEFAULT_POSITION_LIMIT: f64 = 0.2;
pub const DEFAULT_SAMPLES: usize = 60;
/// Three basis points.
pub const LOW_MARKET_IMPACT: f64 = 3e-4;
pub const HIGH_MARKET_IMPACT: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioParams {
    /// Number of risky assets; asset `n+1` is cash.
    pub n: usize,
    pub horizon: usize,
    pub budget: f64,
    /// `x_0` in currency (length `n+1`); all cash when absent.
    #[serde(default)]
    pub initial_holdings: Option<Vec<f64>>,
    /// `η_i`.
    pub sell_cost: Vec<f64>,
    /// `ν_i`.
    pub buy_cost: Vec<f64>,
    /// `u_i`.
    pub position_limit: Vec<f64>,
    pub cash_return: f64,
    /// `m_i`, applied to trades measured in budgets.
    pub market_impact: Vec<f64>,
    /// Models the terminal valuation `ξ_{T+1}ᵀx_T` as its own stage, so that
    /// a risk measure can act on it. Otherwise its expectation is folded
    /// into the stage-`T` objective.
    #[serde(default)]
    pub terminal_stage: bool,
}

impl PortfolioParams {
    /// Desk defaults for `n` assets and horizon `T`.
    pub fn with_defaults(n: usize, horizon: usize) -> Self {
        PortfolioParams {
            n,
            horizon,
            budget: DEFAULT_BUDGET,
            initial_holdings: None,
            sell_cost: alloc::vec![DEFAULT_COST; n],
            buy_cost: alloc::vec![DEFAULT_COST; n],
            position_limit: alloc::vec![DEFAULT_POSITION_LIMIT; n],
            cash_return: DEFAULT_CASH_RETURN,
            market_impact: alloc::vec![LOW_MARKET_IMPACT; n],
            terminal_stage: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |m: String| Err(Error::InvalidParams(m));
        if n == 0 || self.horizon == 0 {
            return bad("n and horizon must be positive".into());
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return bad(format!("budget {} must be positive", self.budget));
        }
        for (name, v) in [
            ("sell_cost", &self.sell_cost),
            ("buy_cost", &self.buy_cost),
            ("position_limit", &self.position_limit),
            ("market_impact", &self.market_impact),
        ] {
            if v.len() != n {
                return bad(format!("{name} has {} entries for {n} assets", v.len()));
            }
        }
        if self
            .sell_cost
            .iter()
            .chain(&self.buy_cost)
            .any(|c| !(0.0..1.0).contains(c))
        {
            return bad("transaction costs must lie in [0, 1)".into());
        }
        if self.position_limit.iter().any(|u| !(*u > 0.0 && *u <= 1.0)) {
            return bad("position limits must lie in (0, 1]".into());
        }
        if self
            .market_impact
            .iter()
            .any(|m| !(*m >= 0.0 && m.is_finite()))
        {
            return bad("market impact costs must be finite and >= 0".into());
        }
        if !(self.cash_return > 0.0) {
            return bad("cash return must be positive".into());
        }
        if let Some(x0) = &self.initial_holdings {
            if x0.len() != n + 1 || x0.iter().any(|v| !(*v >= 0.0)) || x0.iter().sum::<f64>() <= 0.0
            {
                return bad(
                    "initial holdings need n+1 nonnegative entries with positive sum".into(),
                );
            }
        }
        Ok(())
    }

    fn normalized_initial(&self) -> Vec<f64> {
        match &self.initial_holdings {
            Some(x0) => x0.iter().map(|v| v / self.budget).collect(),
            None => {
                let mut x0 = alloc::vec![0.0; self.n + 1];
                x0[self.n] = 1.0;
                x0
            }
        }
    }
}

/// Risky-asset gross returns per stage `t = 1..T+1`; stage 1 has a single
/// outcome. Cash is appended by the builders at the fixed cash return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnScenarios {
    /// `stages[t-1][j]` is the return vector of outcome `j` at stage `t`.
    pub stages: Vec<Vec<Vec<f64>>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl ReturnScenarios {
    /// Uniform probabilities over the given outcomes.
    pub fn uniform(stages: Vec<Vec<Vec<f64>>>) -> Self {
        let probabilities = stages
            .iter()
            .map(|s| alloc::vec![1.0 / s.len() as f64; s.len()])
            .collect();
        ReturnScenarios {
            stages,
            probabilities,
        }
    }

    pub fn horizon_plus_one(&self) -> usize {
        self.stages.len()
    }

    fn validate(&self, params: &PortfolioParams) -> Result<()> {
        let bad = |m: String| Err(Error::ScenarioShapeMismatch(m));
        if self.stages.len() != params.horizon + 1 {
            return bad(format!(
                "{} return stages for horizon {} (need T+1)",
                self.stages.len(),
                params.horizon
            ));
        }
        if self.stages[0].len() != 1 {
            return bad("stage 1 returns must be deterministic".into());
        }
        if self.probabilities.len() != self.stages.len() {
            return bad("one probability vector per stage required".into());
        }
        for (t, (outcomes, probs)) in self.stages.iter().zip(&self.probabilities).enumerate() {
            if outcomes.is_empty() || outcomes.len() != probs.len() {
                return bad(format!(
                    "stage {}: {} outcomes, {} probabilities",
                    t + 1,
                    outcomes.len(),
                    probs.len()
                ));
            }
            for ret in outcomes {
                if ret.len() != params.n {
                    return bad(format!(
                        "stage {}: return vector of length {}, expected {}",
                        t + 1,
                        ret.len(),
                        params.n
                    ));
                }
                if ret.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    return bad(format!("stage {}: gross returns must be positive", t + 1));
                }
            }
        }
        Ok(())
    }

    /// Empirical scenarios from historical gross returns: every stage
    /// `t ≥ 2` takes `m` distinct rows (all rows when `m` equals their
    /// number, otherwise a seeded sample without replacement).
    pub fn from_history(rows: &[Vec<f64>], horizon: usize, m: usize, seed: u64) -> Result<Self> {
        if rows.is_empty() || m == 0 || m > rows.len() {
            return Err(Error::ScenarioShapeMismatch(format!(
                "cannot draw {m} outcomes per stage from {} rows",
                rows.len()
            )));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ScenarioShapeMismatch(
                "rows of unequal length".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = alloc::vec![alloc::vec![alloc::vec![1.0; n]]];
        for _ in 0..horizon {
            let picked = if m == rows.len() {
                rows.to_vec()
            } else {
                sample(&mut rng, rows.len(), m)
                    .iter()
                    .map(|i| rows[i].clone())
                    .collect()
            };
            stages.push(picked);
        }
        Ok(Self::uniform(stages))
    }
}

/// Lognormal gross returns `exp(drift − vol²/2 + vol·z)`, independent per
/// asset, stage and outcome, for stages `2..T+1` (stage 1 returns are 1).
pub fn generate_synthetic_returns(
    seed: u64,
    n: usize,
    horizon: usize,
    m: usize,
    drift: f64,
    vol: f64,
) -> Result<ReturnScenarios> {
    if !(vol >= 0.0 && vol.is_finite()) || !drift.is_finite() {
        return Err(Error::InvalidParams(format!(
            "vol = {vol} must be finite and >= 0"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParams("n and M must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = alloc::vec![alloc::vec![alloc::vec![1.0; n]]];
    for _ in 0..horizon {
        let stage = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        libm::exp(drift - 0.5 * vol * vol + vol * z)
                    })
                    .collect()
            })
            .collect();
        stages.push(stage);
    }
    Ok(ReturnScenarios::uniform(stages))
}

fn field(i: usize) -> String {
    format!("r{}", i + 1)
}

struct Layout {
    n: usize,
    impact: bool,
}

impl Layout {
    fn x(&self, i: usize) -> usize {
        i
    }
    fn cash(&self) -> usize {
        self.n
    }
    fn y(&self, i: usize) -> usize {
        self.n + 1 + i
    }
    fn z(&self, i: usize) -> usize {
        2 * self.n + 1 + i
    }
    /// Impact blocks q, g, ℓ, s, v, w, r in this order.
    fn impact_var(&self, block: usize, i: usize) -> usize {
        3 * self.n + 1 + block * self.n + i
    }
    fn n_dec(&self) -> usize {
        if self.impact {
            10 * self.n + 1
        } else {
            3 * self.n + 1
        }
    }
}

const Q: usize = 0;
const G: usize = 1;
const ELL: usize = 2;
const S: usize = 3;
const V: usize = 4;
const W: usize = 5;
const R: usize = 6;

fn realizations(params: &PortfolioParams, outcomes: &[Vec<f64>], cash: f64) -> Vec<Realization> {
    outcomes
        .iter()
        .map(|ret| {
            let mut r: Realization = ret
                .iter()
                .enumerate()
                .map(|(i, v)| (field(i), *v))
                .collect();
            r.insert(field(params.n), cash);
            r
        })
        .collect()
}

fn stage_model(
    params: &PortfolioParams,
    layout: &Layout,
    wealth_cap: f64,
    impact: &[f64],
) -> StageModel {
    let n = params.n;
    let mut m = StageModel::new(layout.n_dec(), 0.0, wealth_cap);
    m.state = (0..=n).collect();
    m.blocks = alloc::vec![
        VarBlock {
            name: "x".into(),
            start: 0,
            len: n + 1
        },
        VarBlock {
            name: "y".into(),
            start: n + 1,
            len: n
        },
        VarBlock {
            name: "z".into(),
            start: 2 * n + 1,
            len: n
        },
    ];
    let eq = &mut m.equalities;
    // Holdings: x_i = ξ_i x_prev_i − y_i + z_i.
    for i in 0..n {
        let row = eq.push_row(0.0);
        eq.set_current(row, layout.x(i), 1.0);
        eq.set_current(row, layout.y(i), 1.0);
        eq.set_current(row, layout.z(i), -1.0);
        eq.set_previous(row, i, Coef::field(field(i), -1.0));
    }
    // Cash balance.
    let row = eq.push_row(0.0);
    eq.set_current(row, layout.cash(), 1.0);
    eq.set_previous(row, n, Coef::field(field(n), -1.0));
    for i in 0..n {
        if layout.impact {
            eq.set_current(row, layout.y(i), -1.0);
            eq.set_current(row, layout.z(i), 1.0);
            eq.set_current(row, layout.impact_var(Q, i), 1.0);
        } else {
            eq.set_current(row, layout.y(i), -(1.0 - params.sell_cost[i]));
            eq.set_current(row, layout.z(i), 1.0 + params.buy_cost[i]);
        }
    }
    let ineq = &mut m.inequalities;
    for i in 0..n {
        // Sell at most the holding.
        let row = ineq.push_row(0.0);
        ineq.set_current(row, layout.y(i), 1.0);
        ineq.set_previous(row, i, Coef::field(field(i), -1.0));
        // Position cap on risky assets.
        let row = ineq.push_row(0.0);
        ineq.set_current(row, layout.x(i), 1.0);
        for k in 0..=n {
            ineq.set_previous(row, k, Coef::field(field(k), -params.position_limit[i]));
        }
    }
    if layout.impact {
        let names = ["q", "g", "l", "s", "v", "w", "r"];
        for (b, name) in names.iter().enumerate() {
            m.blocks.push(VarBlock {
                name: (*name).into(),
                start: layout.impact_var(b, 0),
                len: n,
            });
        }
        let root_cap = libm::sqrt(2.0 * wealth_cap);
        for (i, &impact_i) in impact.iter().enumerate() {
            let var = |b| layout.impact_var(b, i);
            m.upper[var(G)] = 2.0 * wealth_cap;
            m.upper[var(ELL)] = 2.0 * wealth_cap;
            m.upper[var(V)] = 2.0 * wealth_cap;
            m.upper[var(S)] = root_cap;
            m.upper[var(W)] = root_cap;
            m.lower[var(R)] = 0.125;
            m.upper[var(R)] = 0.125;
            let eq = &mut m.equalities;
            // g = y + z
            let row = eq.push_row(0.0);
            eq.set_current(row, var(G), 1.0);
            eq.set_current(row, layout.y(i), -1.0);
            eq.set_current(row, layout.z(i), -1.0);
            // ℓ = v, s = w
            let row = eq.push_row(0.0);
            eq.set_current(row, var(ELL), 1.0);
            eq.set_current(row, var(V), -1.0);
            let row = eq.push_row(0.0);
            eq.set_current(row, var(S), 1.0);
            eq.set_current(row, var(W), -1.0);
            // −g ≤ ℓ, g ≤ ℓ
            let ineq = &mut m.inequalities;
            let row = ineq.push_row(0.0);
            ineq.set_current(row, var(G), -1.0);
            ineq.set_current(row, var(ELL), -1.0);
            let row = ineq.push_row(0.0);
            ineq.set_current(row, var(G), 1.0);
            ineq.set_current(row, var(ELL), -1.0);
            if impact_i > 0.0 {
                // ℓ² ≤ 2·s·(q/m)
                m.cones.push(RotatedConeBlock {
                    u: AffineExpr::var(var(S)),
                    v: AffineExpr::scaled(var(Q), 1.0 / impact_i),
                    w: alloc::vec![AffineExpr::var(var(ELL))],
                });
            } else {
                m.upper[var(Q)] = 0.0;
            }
            // w² ≤ 2·v·r
            m.cones.push(RotatedConeBlock {
                u: AffineExpr::var(var(V)),
                v: AffineExpr::var(var(R)),
                w: alloc::vec![AffineExpr::var(var(W))],
            });
        }
    }
    m
}

fn build(
    params: &PortfolioParams,
    scenarios: &ReturnScenarios,
    impact: bool,
) -> Result<MultistageProblem> {
    params.validate()?;
    scenarios.validate(params)?;
    let n = params.n;
    let horizon = params.horizon;
    let layout = Layout { n, impact };
    let x0 = params.normalized_initial();

    // Stage 1 returns are all ones, cash included.
    let cash = |t: usize| if t == 1 { 1.0 } else { params.cash_return };
    // Largest gross return over assets, cash and outcomes, per stage.
    let best: Vec<f64> = scenarios
        .stages
        .iter()
        .enumerate()
        .map(|(i, outcomes)| {
            outcomes
                .iter()
                .flat_map(|r| r.iter().copied())
                .fold(cash(i + 1), f64::max)
        })
        .collect();
    let mut wealth = Vec::with_capacity(horizon + 1);
    let mut w = x0.iter().sum::<f64>();
    for b in &best {
        w *= b;
        wealth.push(w);
    }
    let final_wealth = wealth[horizon];

    let mut stages = Vec::with_capacity(horizon + 1);
    let mut real = Vec::with_capacity(horizon + 1);
    for t in 1..=horizon {
        stages.push(stage_model(
            params,
            &layout,
            wealth[t - 1],
            &params.market_impact,
        ));
        real.push(realizations(params, &scenarios.stages[t - 1], cash(t)));
    }
    let terminal = realizations(params, &scenarios.stages[horizon], cash(horizon + 1));
    let mut probabilities: Vec<Vec<f64>> = scenarios.probabilities[..horizon].to_vec();
    if params.terminal_stage {
        // Valuation stage: w = ξᵀx_T, objective −w.
        let mut m = StageModel::new(1, 0.0, (n as f64 + 1.0) * final_wealth);
        m.objective[0] = Coef::Const(-1.0);
        let row = m.equalities.push_row(0.0);
        m.equalities.set_current(row, 0, 1.0);
        for k in 0..=n {
            m.equalities
                .set_previous(row, k, Coef::field(field(k), -1.0));
        }
        stages.push(m);
        real.push(terminal);
        probabilities.push(scenarios.probabilities[horizon].clone());
    } else {
        let probs = &scenarios.probabilities[horizon];
        let last = stages.last_mut().expect("horizon >= 1");
        for k in 0..=n {
            let mean: f64 = terminal
                .iter()
                .zip(probs)
                .map(|(r, p)| p * r[&field(k)])
                .sum();
            last.objective[layout.x(k)] = Coef::Const(-mean);
        }
    }
    let stage_count = stages.len();
    let lattice = build_lattice(real, probabilities)?;
    Ok(MultistageProblem {
        stages,
        lattice,
        initial_state: x0,
        lower_bounds: alloc::vec![-(n as f64 + 1.0) * final_wealth; stage_count - 1],
        sense: Sense::Maximize,
        value_scale: params.budget,
    })
}

/// Proportional transaction cost model.
pub fn build_direct_cost_models(
    params: &PortfolioParams,
    scenarios: &ReturnScenarios,
) -> Result<MultistageProblem> {
    build(params, scenarios, false)
}

/// Market impact model with costs `m_i·g^{3/2}` written as rotated cones.
/// Proportional costs do not enter this model.
pub fn build_market_impact_models(
    params: &PortfolioParams,
    scenarios: &ReturnScenarios,
) -> Result<MultistageProblem> {
    build(params, scenarios, true)
}

/// Smallest `q` with `(g, q)` satisfying the conic impact system for one
/// asset with unit cost `m > 0`; equals `m·g^{3/2}`.
pub fn minimal_impact_cost<S: ConicSolver + ?Sized>(g: f64, m: f64, solver: &S) -> Result<f64> {
    if !(m > 0.0) || !(g >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need g >= 0 and m > 0, got g = {g}, m = {m}"
        )));
    }
    let mut p = ConicProgram::default();
    let inf = f64::INFINITY;
    let q = p.add_var(0.0, inf, 1.0);
    let gv = p.add_var(g, g, 0.0);
    let ell = p.add_var(0.0, inf, 0.0);
    let s = p.add_var(0.0, inf, 0.0);
    let v = p.add_var(0.0, inf, 0.0);
    let w = p.add_var(0.0, inf, 0.0);
    let r = p.add_var(0.125, 0.125, 0.0);
    p.add_cone(RotatedCone {
        u: AffineExpr::var(s),
        v: AffineExpr::scaled(q, 1.0 / m),
        w: alloc::vec![AffineExpr::var(ell)],
    });
    p.add_cone(RotatedCone {
        u: AffineExpr::var(v),
        v: AffineExpr::var(r),
        w: alloc::vec![AffineExpr::var(w)],
    });
    p.add_eq(alloc::vec![(ell, 1.0), (v, -1.0)], 0.0);
    p.add_eq(alloc::vec![(s, 1.0), (w, -1.0)], 0.0);
    p.add_le(alloc::vec![(gv, -1.0), (ell, -1.0)], 0.0);
    p.add_le(alloc::vec![(gv, 1.0), (ell, -1.0)], 0.0);
    let sol = solver
        .solve(&p)
        .map_err(|e| Error::SolverNumericalFailure {
            stage: 0,
            message: format!("{e:?}"),
        })?;
    Ok(sol.x[q])
}

#[cfg(all(test, feature = "std"))]
mod tests {
    use super::*;
    use crate::model::RotatedConeBlock;
    use crate::oracle::solve_extensive_risk_neutral;
    use crate::ClarabelSolver;
    use alloc::vec;

    fn params(n: usize, horizon: usize) -> PortfolioParams {
        let mut p = PortfolioParams::with_defaults(n, horizon);
        p.budget = 1.0;
        p
    }

    fn constant_returns(n: usize, horizon: usize, r: f64) -> ReturnScenarios {
        let mut stages = vec![vec![vec![1.0; n]]];
        stages.extend((0..horizon).map(|_| vec![vec![r; n]]));
        ReturnScenarios::uniform(stages)
    }

    #[test]
    fn flat_market_keeps_budget() {
        let mut p = params(1, 2);
        p.sell_cost = vec![0.0];
        p.buy_cost = vec![0.0];
        p.cash_return = 1.0;
        let model = build_direct_cost_models(&p, &constant_returns(1, 2, 1.0)).unwrap();
        let sol = solve_extensive_risk_neutral(&model, &ClarabelSolver::default()).unwrap();
        assert!((sol.reported - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dominant_asset_compounds() {
        let mut p = params(1, 2);
        p.sell_cost = vec![0.0];
        p.buy_cost = vec![0.0];
        p.position_limit = vec![1.0];
        let model = build_direct_cost_models(&p, &constant_returns(1, 2, 1.1)).unwrap();
        let sol = solve_extensive_risk_neutral(&model, &ClarabelSolver::default()).unwrap();
        // Invest at the end of stage 1; returns at stages 2 and 3 apply.
        assert!((sol.reported - 1.1 * 1.1).abs() < 1e-7, "{}", sol.reported);
    }

    #[test]
    fn round_trip_costs() {
        // Start fully invested in the asset with a cap of one half: half must
        // be sold at stage 1, bringing (1−η) into cash, nothing else moves.
        let mut p = params(1, 1);
        p.initial_holdings = Some(vec![1.0, 0.0]);
        p.position_limit = vec![0.5];
        p.cash_return = 1.0;
        let model = build_direct_cost_models(&p, &constant_returns(1, 1, 1.0)).unwrap();
        let sol = solve_extensive_risk_neutral(&model, &ClarabelSolver::default()).unwrap();
        assert!(
            (sol.reported - (0.5 + 0.5 * 0.99)).abs() < 1e-7,
            "{}",
            sol.reported
        );
    }

    #[test]
    fn zero_impact_matches_costless_linear_model() {
        let scen = generate_synthetic_returns(3, 2, 2, 3, 0.01, 0.08).unwrap();
        let mut lin = params(2, 2);
        lin.sell_cost = vec![0.0; 2];
        lin.buy_cost = vec![0.0; 2];
        let mut mi = lin.clone();
        mi.market_impact = vec![0.0; 2];
        let s = ClarabelSolver::default();
        let a = solve_extensive_risk_neutral(&build_direct_cost_models(&lin, &scen).unwrap(), &s)
            .unwrap();
        let b = solve_extensive_risk_neutral(&build_market_impact_models(&mi, &scen).unwrap(), &s)
            .unwrap();
        assert!(
            (a.value - b.value).abs() < 1e-7,
            "{} vs {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn impact_witness_satisfies_cones() {
        // g = 4, m = 0.5: q = 4 with ℓ = v = 4, s = w = 1, r = 0.125.
        let x = [4.0, 4.0, 4.0, 1.0, 4.0, 1.0, 0.125];
        let e1 = RotatedConeBlock {
            u: AffineExpr::var(3),
            v: AffineExpr::scaled(0, 2.0),
            w: vec![AffineExpr::var(2)],
        };
        let e2 = RotatedConeBlock {
            u: AffineExpr::var(4),
            v: AffineExpr::var(6),
            w: vec![AffineExpr::var(5)],
        };
        assert_eq!(e1.violation(&x), 0.0);
        assert_eq!(e2.violation(&x), 0.0);
        let q = minimal_impact_cost(4.0, 0.5, &ClarabelSolver::default()).unwrap();
        assert!((q - 4.0).abs() < 1e-6);
    }

    #[test]
    fn conic_impact_is_three_halves_power() {
        use rand::Rng;
        let solver = ClarabelSolver::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let g: f64 = rng.random_range(0.0..10.0);
            let m: f64 = rng.random_range(1e-4..1.0);
            let q = minimal_impact_cost(g, m, &solver).unwrap();
            let exact = m * g.powf(1.5);
            assert!(
                (q - exact).abs() <= 1e-6 * exact.max(1.0),
                "g={g} m={m}: {q} vs {exact}"
            );
        }
    }

    #[test]
    fn synthetic_returns() {
        let flat = generate_synthetic_returns(1, 2, 3, 4, 0.01, 0.0).unwrap();
        let e = libm::exp(0.01);
        assert!(flat.stages[1..].iter().flatten().flatten().all(|r| *r == e));
        assert_eq!(flat.stages[0], vec![vec![1.0, 1.0]]);
        assert_eq!(
            generate_synthetic_returns(9, 3, 2, 5, 0.0, 0.1).unwrap(),
            generate_synthetic_returns(9, 3, 2, 5, 0.0, 0.1).unwrap()
        );
        assert!(generate_synthetic_returns(1, 1, 1, 1, 0.0, -1.0).is_err());
    }

    #[test]
    fn log_return_moments() {
        let vol = 0.05;
        let s = generate_synthetic_returns(11, 1, 1, 100_000, 0.0, vol).unwrap();
        let logs: Vec<f64> = s.stages[1].iter().map(|r| r[0].ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let stderr = vol / (logs.len() as f64).sqrt();
        assert!((mean + vol * vol / 2.0).abs() < 3.0 * stderr);
    }

    #[test]
    fn history_sampling() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0 + i as f64 / 100.0]).collect();
        let full = ReturnScenarios::from_history(&rows, 2, 10, 0).unwrap();
        assert_eq!(full.stages[1], rows);
        assert_eq!(full.probabilities[2], vec![0.1; 10]);
        let part = ReturnScenarios::from_history(&rows, 3, 4, 5).unwrap();
        for stage in &part.stages[1..] {
            let mut s: Vec<u64> = stage
                .iter()
                .map(|r| (r[0] * 100.0).round() as u64)
                .collect();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
        }
        assert_eq!(part, ReturnScenarios::from_history(&rows, 3, 4, 5).unwrap());
        assert!(ReturnScenarios::from_history(&rows, 3, 11, 5).is_err());
    }

    #[test]
    fn validation() {
        let mut p = params(2, 2);
        p.sell_cost = vec![1.0, 0.0];
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        let p = params(2, 2);
        let wrong = constant_returns(2, 3, 1.0);
        assert!(matches!(
            build_direct_cost_models(&p, &wrong),
            Err(Error::ScenarioShapeMismatch(_))
        ));
    }
}
