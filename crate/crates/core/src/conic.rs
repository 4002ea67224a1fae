//! Solver-facing conic program: linear objective, box bounds, linear
//! equalities and inequalities, and rotated second-order cones.
//!
//! Dual convention: `eq_duals[i]` is the sensitivity `∂v/∂rhs_i` of the optimal
//! value to the right-hand side of equality `i`; `ineq_duals[i] = -∂v/∂rhs_i`
//! is the nonnegative multiplier of inequality `i` (`a·x ≤ rhs`).

use alloc::string::String;
use alloc::vec::Vec;

pub use crate::model::AffineExpr;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `‖w‖² ≤ 2·u·v`, `u, v ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedCone {
    pub u: AffineExpr,
    pub v: AffineExpr,
    pub w: Vec<AffineExpr>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub cones: Vec<RotatedCone>,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds a variable with the given bounds (may be infinite) and cost.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.equalities.push(LinearRow { coeffs, rhs });
        self.equalities.len() - 1
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.inequalities.push(LinearRow { coeffs, rhs });
        self.inequalities.len() - 1
    }

    pub fn add_cone(&mut self, cone: RotatedCone) {
        self.cones.push(cone);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Solver stopped at relaxed tolerances.
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual objective `−bᵀz`. With dual-feasible multipliers this is a lower
    /// bound on the optimal value, and as a function of the right-hand sides
    /// it is the affine minorant cuts are built from.
    pub dual_objective: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverFailure {
    Infeasible,
    Unbounded,
    Numerical(String),
}

/// Anything able to solve a [`ConicProgram`] to optimality with duals.
///
/// Implementations must not share mutable state between calls; the drivers
/// may call `solve` concurrently on different programs.
pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution, SolverFailure>;
}

impl<S: ConicSolver + ?Sized> ConicSolver for &S {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution, SolverFailure> {
        (**self).solve(program)
    }
}
