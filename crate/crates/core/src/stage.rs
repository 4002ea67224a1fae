//! One stage solve: stage cost plus cut-approximated cost-to-go, optionally
//! regularized toward a prox-center, and the dual-based cut it yields.

use alloc::format;
use alloc::vec::Vec;

use crate::conic::{
    AffineExpr, ConicProgram, ConicSolver, RotatedCone, SolveStatus, SolverFailure,
};
use crate::cuts::CutPool;
use crate::model::StageInstance;
use crate::{Error, Result};

/// `λ·‖x_state − center‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxTerm {
    pub center: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub decision: Vec<f64>,
    pub state: Vec<f64>,
    /// `cᵀx`.
    pub stage_cost: f64,
    /// `cᵀx + Φ(x_state)`, prox term excluded.
    pub value: f64,
    /// Dual objective: a lower bound on the optimal value (prox included when
    /// one was applied).
    pub dual_bound: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub status: SolveStatus,
    pub prox_applied: bool,
}

fn map_failure(f: SolverFailure) -> Error {
    match f {
        SolverFailure::Infeasible => Error::Infeasible { stage: 0 },
        SolverFailure::Unbounded => Error::Unbounded { stage: 0 },
        SolverFailure::Numerical(message) => Error::SolverNumericalFailure { stage: 0, message },
    }
}

/// Adds `λ·s` with `‖x_state − center‖² ≤ 2·s·(1/2)` to `program`. Emits
/// nothing for `λ = 0`.
pub fn quadratic_prox_encoding(
    program: &mut ConicProgram,
    weight: f64,
    center: &[f64],
    state_vars: &[usize],
) {
    if weight <= 0.0 {
        return;
    }
    let s = program.add_var(0.0, f64::INFINITY, weight);
    let w = state_vars
        .iter()
        .zip(center)
        .map(|(&i, &c)| AffineExpr {
            terms: alloc::vec![(i, 1.0)],
            constant: -c,
        })
        .collect();
    program.add_cone(RotatedCone {
        u: AffineExpr::var(s),
        v: AffineExpr::constant(0.5),
        w,
    });
}

/// Builds the stage program. Decisions come first, then `θ` when a pool is
/// given; model inequalities precede the cut rows.
pub fn stage_program(
    inst: &StageInstance,
    x_prev: &[f64],
    cost_to_go: Option<&CutPool>,
    prox: Option<&ProxTerm>,
) -> Result<ConicProgram> {
    let mut p = ConicProgram::default();
    for i in 0..inst.n_dec {
        p.add_var(inst.lower[i], inst.upper[i], inst.objective[i]);
    }
    let rows = |block: &crate::model::ResolvedBlock| {
        let mut coeffs: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); block.rows];
        for &(r, c, v) in &block.current {
            coeffs[r].push((c, v));
        }
        coeffs.into_iter().zip(block.shifted_rhs(x_prev))
    };
    for (c, rhs) in rows(&inst.equalities) {
        p.add_eq(c, rhs);
    }
    for (c, rhs) in rows(&inst.inequalities) {
        p.add_le(c, rhs);
    }
    for cone in &inst.cones {
        p.add_cone(RotatedCone {
            u: cone.u.clone(),
            v: cone.v.clone(),
            w: cone.w.clone(),
        });
    }
    if let Some(pool) = cost_to_go {
        if pool.dim != inst.state.len() {
            return Err(Error::DimensionMismatch(format!(
                "cut pool of dimension {} for a stage with {} state components",
                pool.dim,
                inst.state.len()
            )));
        }
        let theta = p.add_var(pool.lower_bound, f64::INFINITY, 1.0);
        for cut in pool.cuts() {
            // a + βᵀx ≤ θ
            let mut coeffs: Vec<(usize, f64)> = inst
                .state
                .iter()
                .copied()
                .zip(cut.slope.iter().copied())
                .collect();
            coeffs.push((theta, -1.0));
            p.add_le(coeffs, -cut.intercept);
        }
    }
    if let Some(prox) = prox {
        if !(prox.weight >= 0.0) || prox.center.len() != inst.state.len() {
            return Err(Error::ParameterOutOfRange(
                "prox weight must be >= 0 with one center entry per state".into(),
            ));
        }
        for (&i, &c) in inst.state.iter().zip(&prox.center) {
            if c < inst.lower[i] - 1e-9 || c > inst.upper[i] + 1e-9 {
                return Err(Error::ParameterOutOfRange(format!(
                    "prox center {c} outside bounds of decision {i}"
                )));
            }
        }
        quadratic_prox_encoding(&mut p, prox.weight, &prox.center, &inst.state);
    }
    Ok(p)
}

pub fn solve_stage<S: ConicSolver + ?Sized>(
    solver: &S,
    inst: &StageInstance,
    x_prev: &[f64],
    cost_to_go: Option<&CutPool>,
    prox: Option<&ProxTerm>,
) -> Result<StageSolution> {
    let program = stage_program(inst, x_prev, cost_to_go, prox)?;
    let sol = solver.solve(&program).map_err(map_failure)?;
    let mut decision = sol.x;
    decision.truncate(inst.n_dec);
    // Interior-point iterates sit within tolerance of the box; clipping keeps
    // a state at zero from turning slightly negative and the next stage
    // infeasible.
    for ((x, lo), hi) in decision.iter_mut().zip(&inst.lower).zip(&inst.upper) {
        *x = x.max(*lo).min(*hi);
    }
    let state = inst.state_of(&decision);
    let stage_cost = inst.stage_cost(&decision);
    let value = stage_cost + cost_to_go.map_or(0.0, |pool| pool.evaluate(&state));
    let mut ineq_duals = sol.ineq_duals;
    ineq_duals.truncate(inst.inequalities.rows);
    Ok(StageSolution {
        decision,
        state,
        stage_cost,
        value,
        dual_bound: sol.dual_objective,
        eq_duals: sol.eq_duals,
        ineq_duals,
        status: sol.status,
        prox_applied: prox.is_some_and(|p| p.weight > 0.0),
    })
}

/// Value and subgradient in `x_prev` of the stage value function at the
/// solve's trial point: `θ` is the dual objective and `β = −Bᵀν + Hᵀμ`.
pub fn cut_from_solution(
    inst: &StageInstance,
    sol: &StageSolution,
    prev_dim: usize,
) -> Result<(f64, Vec<f64>)> {
    if sol.prox_applied {
        return Err(Error::ProxInCutSolve);
    }
    if sol.eq_duals.len() != inst.equalities.rows || sol.ineq_duals.len() != inst.inequalities.rows
    {
        return Err(Error::MissingDuals);
    }
    let mut slope = alloc::vec![0.0; prev_dim];
    for &(r, c, v) in &inst.equalities.previous {
        slope[c] -= v * sol.eq_duals[r];
    }
    for &(r, c, v) in &inst.inequalities.previous {
        slope[c] += v * sol.ineq_duals[r];
    }
    if !sol.dual_bound.is_finite() || slope.iter().any(|b| !b.is_finite()) {
        return Err(Error::MissingDuals);
    }
    Ok((sol.dual_bound, slope))
}
