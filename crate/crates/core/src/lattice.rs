//! Stagewise-independent discrete scenario process stored as a recombining
//! lattice: every node of stage `t - 1` shares the same children, so only the
//! per-stage supports are kept.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One realization of the stage data, keyed by model-defined field names.
pub type Realization = BTreeMap<String, f64>;

/// Deviation from 1 tolerated in user-supplied probability vectors.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Default cap on explicit tree nodes for enumeration-based routines.
pub const DEFAULT_NODE_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeStage {
    pub probabilities: Vec<f64>,
    pub realizations: Vec<Realization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeDocument", into = "LatticeDocument")]
pub struct ScenarioLattice {
    stages: Vec<LatticeStage>,
}

/// On-disk layout: `{"T": int, "stages": [...]}`.
#[derive(Serialize, Deserialize)]
struct LatticeDocument {
    #[serde(rename = "T")]
    stage_count: usize,
    stages: Vec<LatticeStage>,
}

impl TryFrom<LatticeDocument> for ScenarioLattice {
    type Error = Error;

    fn try_from(doc: LatticeDocument) -> Result<Self> {
        if doc.stage_count != doc.stages.len() {
            return Err(Error::DimensionMismatch(format!(
                "T = {} but {} stages listed",
                doc.stage_count,
                doc.stages.len()
            )));
        }
        let (realizations, probabilities) = doc
            .stages
            .into_iter()
            .map(|s| (s.realizations, s.probabilities))
            .unzip();
        build_lattice(realizations, probabilities)
    }
}

impl From<ScenarioLattice> for LatticeDocument {
    fn from(lattice: ScenarioLattice) -> Self {
        LatticeDocument {
            stage_count: lattice.stages.len(),
            stages: lattice.stages,
        }
    }
}

/// Validates per-stage supports and returns the lattice. Stage 1 must carry
/// exactly one realization. Probabilities are renormalized after validation.
pub fn build_lattice(
    per_stage_realizations: Vec<Vec<Realization>>,
    per_stage_probabilities: Vec<Vec<f64>>,
) -> Result<ScenarioLattice> {
    if per_stage_realizations.is_empty() {
        return Err(Error::EmptyStage { stage: 1 });
    }
    if per_stage_realizations.len() != per_stage_probabilities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} realization lists but {} probability vectors",
            per_stage_realizations.len(),
            per_stage_probabilities.len()
        )));
    }
    let mut stages = Vec::with_capacity(per_stage_realizations.len());
    for (idx, (realizations, mut probabilities)) in per_stage_realizations
        .into_iter()
        .zip(per_stage_probabilities)
        .enumerate()
    {
        let stage = idx + 1;
        if realizations.is_empty() {
            return Err(Error::EmptyStage { stage });
        }
        if realizations.len() != probabilities.len() {
            return Err(Error::DimensionMismatch(format!(
                "stage {stage}: {} realizations but {} probabilities",
                realizations.len(),
                probabilities.len()
            )));
        }
        if stage == 1 && realizations.len() != 1 {
            return Err(Error::RandomFirstStage {
                count: realizations.len(),
            });
        }
        if let Some(&value) = probabilities.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::NonPositiveProbability { stage, value });
        }
        let sum: f64 = probabilities.iter().sum();
        if !((sum - 1.0).abs() <= PROBABILITY_SUM_TOLERANCE) {
            return Err(Error::ProbabilitySumMismatch { stage, sum });
        }
        probabilities.iter_mut().for_each(|p| *p /= sum);
        stages.push(LatticeStage {
            probabilities,
            realizations,
        });
    }
    Ok(ScenarioLattice { stages })
}

impl ScenarioLattice {
    /// Single-scenario lattice, one realization per stage.
    pub fn deterministic(realizations: Vec<Realization>) -> Result<Self> {
        let n = realizations.len();
        build_lattice(
            realizations.into_iter().map(|r| vec![r]).collect(),
            vec![vec![1.0]; n],
        )
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Stage `t` is 1-based.
    pub fn stage(&self, t: usize) -> &LatticeStage {
        &self.stages[t - 1]
    }

    pub fn stages(&self) -> &[LatticeStage] {
        &self.stages
    }

    /// Number of realizations `M_t` (1-based stage).
    pub fn branching(&self, t: usize) -> usize {
        self.stages[t - 1].probabilities.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.stages.iter().all(|s| s.probabilities.len() == 1)
    }

    /// Number of scenario-tree nodes of stage `t` (1-based).
    pub fn nodes_at_stage(&self, t: usize) -> u128 {
        (1..=t).map(|s| self.branching(s) as u128).product()
    }

    /// Total node count of the explicit tree restricted to stages `from..=T`
    /// when rooted at a single stage `from - 1` node.
    pub fn subtree_node_count(&self, from: usize) -> u128 {
        let mut total = 0u128;
        let mut width = 1u128;
        for t in from..=self.stage_count() {
            width = width.saturating_mul(self.branching(t) as u128);
            total = total.saturating_add(width);
        }
        total
    }

    pub fn leaf_count(&self) -> u128 {
        self.nodes_at_stage(self.stage_count())
    }

    /// Draws one realization index per stage, each by inversion of the stage
    /// distribution. Stage 1 is always index 0.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> SamplePath {
        let mut indices = Vec::with_capacity(self.stages.len());
        indices.push(0);
        for stage in &self.stages[1..] {
            indices.push(draw_index(&stage.probabilities, rng));
        }
        SamplePath { indices }
    }

    /// All leaf paths with their probabilities, in lexicographic order.
    pub fn enumerate_leaf_scenarios(&self, node_budget: usize) -> Result<Vec<(SamplePath, f64)>> {
        let leaves = self.leaf_count();
        if leaves > node_budget as u128 {
            return Err(Error::TreeTooLarge {
                nodes: leaves,
                budget: node_budget,
            });
        }
        let mut out = vec![(SamplePath { indices: vec![0] }, 1.0)];
        for stage in &self.stages[1..] {
            let mut next = Vec::with_capacity(out.len() * stage.probabilities.len());
            for (path, prob) in &out {
                for (j, p) in stage.probabilities.iter().enumerate() {
                    let mut indices = path.indices.clone();
                    indices.push(j);
                    next.push((SamplePath { indices }, prob * p));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

pub(crate) fn draw_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    if probabilities.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probabilities.len() - 1
}

/// One realization index per stage; `indices[0]` is the deterministic stage 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplePath {
    pub indices: Vec<usize>,
}

impl SamplePath {
    /// Realization index at 1-based stage `t`.
    pub fn at(&self, t: usize) -> usize {
        self.indices[t - 1]
    }
}
