//! A multistage problem: stage models on a scenario lattice with an initial
//! state and finite lower bounds for every cost-to-go function.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cuts::CutPool;
use crate::lattice::ScenarioLattice;
use crate::model::{StageInstance, StageModel};
use crate::{Error, Result};

/// Sense in which bounds are reported. Models are always minimized
/// internally; maximization problems are stored negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistageProblem {
    /// Stage models for `t = 1..T`.
    pub stages: Vec<StageModel>,
    pub lattice: ScenarioLattice,
    /// `x_0`.
    pub initial_state: Vec<f64>,
    /// `L_t` for the cost-to-go functions `Q_2..Q_T` (length `T-1`).
    pub lower_bounds: Vec<f64>,
    #[serde(default)]
    pub sense: Sense,
    /// Reported value = `value_scale · internal` (negated for maximization).
    #[serde(default = "one")]
    pub value_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl MultistageProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t_count = self.stages.len();
        if t_count == 0 || t_count != self.lattice.stage_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} stage models for a lattice with {} stages",
                t_count,
                self.lattice.stage_count()
            )));
        }
        if self.lower_bounds.len() != t_count - 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} cost-to-go bounds, expected {}",
                self.lower_bounds.len(),
                t_count - 1
            )));
        }
        if self.lower_bounds.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidModel(
                "cost-to-go lower bounds must be finite".into(),
            ));
        }
        if !(self.value_scale > 0.0 && self.value_scale.is_finite()) {
            return Err(Error::InvalidModel("value_scale must be positive".into()));
        }
        let mut prev_dim = self.initial_state.len();
        for (i, model) in self.stages.iter().enumerate() {
            model.validate(prev_dim).map_err(|e| match e {
                Error::InvalidModel(m) => Error::InvalidModel(format!("stage {}: {m}", i + 1)),
                other => other,
            })?;
            prev_dim = model.state_dim();
        }
        Ok(())
    }

    /// Validates and resolves every stage model under every realization.
    pub fn resolve(&self) -> Result<ResolvedProblem> {
        self.validate()?;
        let instances = self
            .stages
            .iter()
            .zip(self.lattice.stages())
            .map(|(model, stage)| {
                stage
                    .realizations
                    .iter()
                    .map(|r| model.resolve(r))
                    .collect()
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(ResolvedProblem {
            instances,
            probabilities: self
                .lattice
                .stages()
                .iter()
                .map(|s| s.probabilities.clone())
                .collect(),
            initial_state: self.initial_state.clone(),
            lower_bounds: self.lower_bounds.clone(),
            sense: self.sense,
            value_scale: self.value_scale,
        })
    }

    /// Internal (minimization) value in reported units.
    pub fn reported(&self, internal: f64) -> f64 {
        to_reported(self.sense, self.value_scale, internal)
    }
}

pub(crate) fn to_reported(sense: Sense, scale: f64, internal: f64) -> f64 {
    match sense {
        Sense::Minimize => scale * internal,
        Sense::Maximize => -scale * internal,
    }
}

/// Numeric stage data for every (stage, realization) pair.
#[derive(Debug, Clone)]
pub struct ResolvedProblem {
    /// `instances[t-1][j]`.
    pub instances: Vec<Vec<StageInstance>>,
    pub probabilities: Vec<Vec<f64>>,
    pub initial_state: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    pub sense: Sense,
    pub value_scale: f64,
}

impl ResolvedProblem {
    pub fn horizon(&self) -> usize {
        self.instances.len()
    }

    pub fn state_dim(&self, t: usize) -> usize {
        if t == 0 {
            self.initial_state.len()
        } else {
            self.instances[t - 1][0].state.len()
        }
    }

    /// Fresh pools for `Q_2..Q_T`; `pools[t-2]` approximates `Q_t`.
    pub fn empty_pools(&self) -> Vec<CutPool> {
        (2..=self.horizon())
            .map(|t| CutPool::new(t, self.state_dim(t - 1), self.lower_bounds[t - 2]))
            .collect()
    }

    pub fn reported(&self, internal: f64) -> f64 {
        to_reported(self.sense, self.value_scale, internal)
    }
}

impl ResolvedProblem {
    /// Same draws as [`ScenarioLattice::sample_path`] on the source lattice.
    pub fn sample_path<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.horizon());
        path.push(0);
        for probs in &self.probabilities[1..] {
            path.push(crate::lattice::draw_index(probs, rng));
        }
        path
    }

    pub fn is_deterministic(&self) -> bool {
        self.probabilities.iter().all(|p| p.len() == 1)
    }
}
