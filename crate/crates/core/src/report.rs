//! Iteration traces and final reports.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cuts::CutPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gap criterion met.
    Gap,
    /// Iteration cap hit before the gap criterion.
    IterationLimit,
    /// Fixed iteration budget exhausted (no gap test requested).
    IterationBudget,
}

/// One iteration, bounds in reported units and sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    /// `upper_bound − lower_bound`.
    pub gap: Option<f64>,
    pub forward_ms: f64,
    pub backward_ms: f64,
    /// First-stage value of the approximate problem, internal units.
    pub deterministic_bound: f64,
}

impl IterationRecord {
    /// Gap in percent of the upper bound.
    pub fn gap_pct(&self) -> Option<f64> {
        match (self.lower_bound, self.upper_bound) {
            (Some(lb), Some(ub)) if ub != 0.0 => Some(100.0 * (ub - lb) / ub.abs()),
            _ => None,
        }
    }
}

/// Policy simulation summary in reported units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySimulation {
    pub values: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    /// One-sided bound: below the mean for maximization, above otherwise.
    pub confidence_bound: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub variant: String,
    pub seed: Option<u64>,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    /// Decisions `x_1..x_T` of the last forward pass (internal units).
    pub trajectory: Vec<Vec<f64>>,
    pub cut_counts: Vec<usize>,
    pub final_lower_bound: Option<f64>,
    pub final_upper_bound: Option<f64>,
    pub simulation: Option<PolicySimulation>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub pools: Vec<CutPool>,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}
