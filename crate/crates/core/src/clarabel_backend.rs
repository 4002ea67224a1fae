//! [`ConicSolver`] backed by the Clarabel interior-point method.
//!
//! Rotated cones map to standard second-order cones through
//! `((u+v)/√2, (u-v)/√2, w)`. Fixed variables become equalities; infinite
//! bounds produce no rows.

use alloc::format;
use alloc::vec::Vec;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::conic::{ConicProgram, ConicSolution, ConicSolver, SolveStatus, SolverFailure};

/// Tolerance of the single retry after a stalled solve.
const RETRY_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct ClarabelSolver {
    /// Absolute/relative duality gap and feasibility tolerance.
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        ClarabelSolver {
            tolerance: 1e-9,
            max_iter: 200,
        }
    }
}

impl ClarabelSolver {
    pub fn with_tolerance(tolerance: f64) -> Self {
        ClarabelSolver {
            tolerance,
            ..Self::default()
        }
    }

    fn settings(&self, tolerance: f64) -> DefaultSettings<f64> {
        DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(tolerance)
            .tol_gap_rel(tolerance)
            .tol_feas(tolerance)
            .tol_ktratio(tolerance.max(1e-10))
            .presolve_enable(false)
            .build()
            .expect("static settings are valid")
    }
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> usize {
        let row = self.b.len();
        for (col, val) in coeffs {
            if val != 0.0 {
                self.i.push(row);
                self.j.push(col);
                self.v.push(val);
            }
        }
        self.b.push(rhs);
        row
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution, SolverFailure> {
        let n = program.num_vars();
        let mut rows = Rows {
            i: Vec::new(),
            j: Vec::new(),
            v: Vec::new(),
            b: Vec::new(),
        };
        // Clarabel form: A x + s = b, s ∈ K.
        for row in &program.equalities {
            rows.push(row.coeffs.iter().copied(), row.rhs);
        }
        let mut fixed = 0;
        for k in 0..n {
            if program.lower[k] == program.upper[k] {
                rows.push([(k, 1.0)], program.lower[k]);
                fixed += 1;
            }
        }
        let zero_dim = program.equalities.len() + fixed;
        for row in &program.inequalities {
            rows.push(row.coeffs.iter().copied(), row.rhs);
        }
        for k in 0..n {
            let (l, u) = (program.lower[k], program.upper[k]);
            if l == u {
                continue;
            }
            if u.is_finite() {
                rows.push([(k, 1.0)], u);
            }
            if l.is_finite() {
                rows.push([(k, -1.0)], -l);
            }
        }
        let nonneg_dim = rows.b.len() - zero_dim;
        let mut cones = Vec::with_capacity(2 + program.cones.len());
        if zero_dim > 0 {
            cones.push(SupportedConeT::ZeroConeT(zero_dim));
        }
        if nonneg_dim > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg_dim));
        }
        let r = core::f64::consts::FRAC_1_SQRT_2;
        for cone in &program.cones {
            // s = b - A x, so an affine expression e = c + a·x becomes row (-a, c).
            let mut head = cone.u.terms.clone();
            head.extend(cone.v.terms.iter().copied());
            rows.push(
                head.iter().map(|&(k, c)| (k, -c * r)),
                (cone.u.constant + cone.v.constant) * r,
            );
            let diff = cone
                .u
                .terms
                .iter()
                .map(|&(k, c)| (k, -c * r))
                .chain(cone.v.terms.iter().map(|&(k, c)| (k, c * r)));
            rows.push(diff, (cone.u.constant - cone.v.constant) * r);
            for w in &cone.w {
                rows.push(w.terms.iter().map(|&(k, c)| (k, -c)), w.constant);
            }
            cones.push(SupportedConeT::SecondOrderConeT(2 + cone.w.len()));
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let p = CscMatrix::<f64>::zeros((n, n));
        let run = |settings| -> Result<_, SolverFailure> {
            let mut solver =
                DefaultSolver::new(&p, &program.objective, &a, &rows.b, &cones, settings)
                    .map_err(|e| SolverFailure::Numerical(format!("{e}")))?;
            solver.solve();
            Ok(solver.solution)
        };
        let mut sol = run(self.settings(self.tolerance))?;
        let mut relaxed = false;
        if matches!(
            sol.status,
            SolverStatus::InsufficientProgress
                | SolverStatus::MaxIterations
                | SolverStatus::NumericalError
        ) {
            // Stalls near the optimum usually clear at looser tolerances.
            sol = run(self.settings(RETRY_TOLERANCE.max(self.tolerance)))?;
            relaxed = true;
        }
        let status = match sol.status {
            SolverStatus::Solved if !relaxed => SolveStatus::Optimal,
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(SolverFailure::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(SolverFailure::Unbounded)
            }
            other => return Err(SolverFailure::Numerical(format!("{other:?}"))),
        };
        let neq = program.equalities.len();
        let eq_duals = sol.z[..neq].iter().map(|z| -z).collect();
        let ineq_duals = sol.z[zero_dim..zero_dim + program.inequalities.len()]
            .iter()
            .map(|z| z.max(0.0))
            .collect();
        let dual_objective = -rows.b.iter().zip(&sol.z).map(|(b, z)| b * z).sum::<f64>();
        Ok(ConicSolution {
            objective: program.objective_value(&sol.x),
            dual_objective,
            x: sol.x,
            eq_duals,
            ineq_duals,
            status,
        })
    }
}
