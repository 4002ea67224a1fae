//! Regularized dual dynamic programming for multistage convex programs.
//!
//! The crate solves dynamic programming equations of multistage problems whose
//! stage subproblems are linear programs with optional rotated second-order
//! cone blocks, coupled to the previous stage only through linear terms.
//! Two drivers are provided:
//!
//! * [`reddp`]: deterministic DDP and its regularized variant REDDP, where the
//!   forward pass penalizes the distance to a prox-center;
//! * [`sddp`]: stochastic SDDP and SDDP-REG on a stagewise-independent
//!   [`ScenarioLattice`], with optional nested mean-AV@R risk aversion, plus a
//!   full-tree forward mode for small instances.
//!
//! The [`oracle`] module solves the extensive form of small instances and is
//! used to validate cuts and bounds. [`portfolio`] builds the portfolio
//! rebalancing models with proportional transaction costs and 3/2-power
//! market impact costs.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. In that configuration callers supply their own
//! [`ConicSolver`](conic::ConicSolver) and timings are reported as zero.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod clock;
pub mod conic;
pub mod cuts;
mod engine;
mod error;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod portfolio;
pub mod problem;
pub mod prox;
pub mod reddp;
pub mod report;
pub mod risk;
pub mod sddp;
pub mod stage;
mod stats;

#[cfg(feature = "std")]
pub mod clarabel_backend;

pub use conic::{ConicProgram, ConicSolution, ConicSolver};
pub use cuts::{Cut, CutPool};
pub use error::{Error, Result};
pub use lattice::{Realization, SamplePath, ScenarioLattice};
pub use model::{Coef, StageInstance, StageModel};
pub use oracle::{
    evaluate_cost_to_go, solve_extensive, solve_extensive_risk_averse, solve_extensive_risk_neutral,
};
pub use problem::{MultistageProblem, Sense};
pub use prox::{CenterRule, PenaltyRule, ProxScheme, Variant};
pub use reddp::{run_deterministic, DeterministicConfig, GapMode};
pub use report::{IterationRecord, SolveReport, Termination};
pub use risk::{aggregate, avar_value_oracle, RiskSpec};
pub use sddp::{
    run_sddp, run_sreda_fulltree, run_sreda_fulltree_default, simulate_policy, StochasticConfig,
    Stopping,
};

#[cfg(feature = "std")]
pub use clarabel_backend::ClarabelSolver;
