//! Stage subproblem data: linear objective, linear blocks coupled to the
//! previous state, rotated second-order cone blocks and a bounding box.
//!
//! Coefficients may reference realization fields by name; [`StageModel::resolve`]
//! turns a model plus one [`Realization`] into a purely numeric
//! [`StageInstance`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lattice::Realization;
use crate::{Error, Result};

/// A scalar that is either constant or a scaled realization field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Const(f64),
    Field {
        field: String,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Coef {
    pub fn field(name: impl Into<String>, scale: f64) -> Self {
        Coef::Field {
            field: name.into(),
            scale,
        }
    }

    pub fn resolve(&self, realization: &Realization) -> Result<f64> {
        match self {
            Coef::Const(v) => Ok(*v),
            Coef::Field { field, scale } => realization
                .get(field)
                .map(|v| v * scale)
                .ok_or_else(|| Error::UnknownField(field.clone())),
        }
    }
}

impl From<f64> for Coef {
    fn from(v: f64) -> Self {
        Coef::Const(v)
    }
}

/// Sparse matrix entry `(row, col, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry(pub usize, pub usize, pub Coef);

/// Rows of the form `current · x_t + previous · x_{t-1} (= or <=) rhs`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub rows: usize,
    #[serde(default)]
    pub current: Vec<Entry>,
    #[serde(default)]
    pub previous: Vec<Entry>,
    #[serde(default)]
    pub rhs: Vec<Coef>,
}

impl LinearBlock {
    /// Appends an empty row and returns its index.
    pub fn push_row(&mut self, rhs: impl Into<Coef>) -> usize {
        self.rows += 1;
        self.rhs.push(rhs.into());
        self.rows - 1
    }

    pub fn set_current(&mut self, row: usize, col: usize, value: impl Into<Coef>) {
        self.current.push(Entry(row, col, value.into()));
    }

    pub fn set_previous(&mut self, row: usize, col: usize, value: impl Into<Coef>) {
        self.previous.push(Entry(row, col, value.into()));
    }
}

/// `constant + Σ coef · x[index]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    #[serde(default)]
    pub terms: Vec<(usize, f64)>,
    #[serde(default)]
    pub constant: f64,
}

impl AffineExpr {
    pub fn var(index: usize) -> Self {
        Self::scaled(index, 1.0)
    }

    pub fn scaled(index: usize, coef: f64) -> Self {
        AffineExpr {
            terms: alloc::vec![(index, coef)],
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

/// `‖w‖² ≤ 2·u·v`, `u ≥ 0`, `v ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotatedConeBlock {
    pub u: AffineExpr,
    pub v: AffineExpr,
    pub w: Vec<AffineExpr>,
}

impl RotatedConeBlock {
    /// Largest violation of the cone inequalities at `x` (0 when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let u = self.u.eval(x);
        let v = self.v.eval(x);
        let ww: f64 = self
            .w
            .iter()
            .map(|e| {
                let v = e.eval(x);
                v * v
            })
            .sum();
        (ww - 2.0 * u * v).max(-u).max(-v).max(0.0)
    }
}

/// Named contiguous range of decision components (documentation only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    #[serde(default)]
    pub blocks: Vec<VarBlock>,
    pub n_dec: usize,
    /// Decision components forming the outgoing state `x_t`.
    pub state: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<Coef>,
    #[serde(default)]
    pub equalities: LinearBlock,
    #[serde(default)]
    pub inequalities: LinearBlock,
    #[serde(default)]
    pub cones: Vec<RotatedConeBlock>,
}

impl StageModel {
    /// Empty model with `n_dec` decisions in `[lower, upper]` and zero cost.
    pub fn new(n_dec: usize, lower: f64, upper: f64) -> Self {
        StageModel {
            blocks: Vec::new(),
            n_dec,
            state: Vec::new(),
            lower: alloc::vec![lower; n_dec],
            upper: alloc::vec![upper; n_dec],
            objective: alloc::vec![Coef::Const(0.0); n_dec],
            equalities: LinearBlock::default(),
            inequalities: LinearBlock::default(),
            cones: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    /// Checks structural invariants given the incoming state dimension.
    pub fn validate(&self, prev_state_dim: usize) -> Result<()> {
        let n = self.n_dec;
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.lower.len() != n || self.upper.len() != n || self.objective.len() != n {
            return bad(format!("bounds/objective must have length {n}"));
        }
        for i in 0..n {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !l.is_finite() || !u.is_finite() {
                return bad(format!("decision {i} has an unbounded box [{l}, {u}]"));
            }
            if l > u {
                return bad(format!("decision {i} has an empty box [{l}, {u}]"));
            }
        }
        let mut seen = alloc::vec![false; n];
        for &s in &self.state {
            if s >= n || seen[s] {
                return bad(format!(
                    "state selector index {s} is out of range or repeated"
                ));
            }
            seen[s] = true;
        }
        for (name, block) in [
            ("equality", &self.equalities),
            ("inequality", &self.inequalities),
        ] {
            if block.rhs.len() != block.rows {
                return bad(format!(
                    "{name} block has {} rhs for {} rows",
                    block.rhs.len(),
                    block.rows
                ));
            }
            if let Some(e) = block.current.iter().find(|e| e.0 >= block.rows || e.1 >= n) {
                return bad(format!("{name} entry ({}, {}) out of range", e.0, e.1));
            }
            if let Some(e) = block
                .previous
                .iter()
                .find(|e| e.0 >= block.rows || e.1 >= prev_state_dim)
            {
                return bad(format!(
                    "{name} coupling entry ({}, {}) out of range",
                    e.0, e.1
                ));
            }
        }
        for cone in &self.cones {
            let idx = cone
                .w
                .iter()
                .chain([&cone.u, &cone.v])
                .filter_map(AffineExpr::max_index)
                .max();
            if idx.is_some_and(|i| i >= n) {
                return bad("cone block references a missing decision".to_string());
            }
        }
        Ok(())
    }

    pub fn resolve(&self, realization: &Realization) -> Result<StageInstance> {
        let objective = resolve_all(&self.objective, realization)?;
        let equalities = ResolvedBlock::new(&self.equalities, realization)?;
        let inequalities = ResolvedBlock::new(&self.inequalities, realization)?;
        let finite = objective.iter().all(|v| v.is_finite())
            && equalities.is_finite()
            && inequalities.is_finite();
        if !finite {
            return Err(Error::InvalidModel(
                "realization produces non-finite stage data".to_string(),
            ));
        }
        Ok(StageInstance {
            n_dec: self.n_dec,
            state: self.state.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            objective,
            equalities,
            inequalities,
            cones: self.cones.clone(),
        })
    }
}

fn resolve_all(coefs: &[Coef], realization: &Realization) -> Result<Vec<f64>> {
    coefs.iter().map(|c| c.resolve(realization)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedBlock {
    pub rows: usize,
    pub current: Vec<(usize, usize, f64)>,
    pub previous: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl ResolvedBlock {
    fn new(block: &LinearBlock, realization: &Realization) -> Result<Self> {
        let entries = |list: &[Entry]| -> Result<Vec<(usize, usize, f64)>> {
            list.iter()
                .map(|Entry(r, c, v)| Ok((*r, *c, v.resolve(realization)?)))
                .collect()
        };
        Ok(ResolvedBlock {
            rows: block.rows,
            current: entries(&block.current)?,
            previous: entries(&block.previous)?,
            rhs: resolve_all(&block.rhs, realization)?,
        })
    }

    fn is_finite(&self) -> bool {
        self.rhs.iter().all(|v| v.is_finite())
            && self
                .current
                .iter()
                .chain(&self.previous)
                .all(|e| e.2.is_finite())
    }

    /// `rhs - previous · x_prev`, the right-hand side seen by the stage solve.
    pub fn shifted_rhs(&self, x_prev: &[f64]) -> Vec<f64> {
        let mut rhs = self.rhs.clone();
        for &(r, c, v) in &self.previous {
            rhs[r] -= v * x_prev[c];
        }
        rhs
    }

    /// Row activity `current · x + previous · x_prev`.
    pub fn activity(&self, x: &[f64], x_prev: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.rows];
        for &(r, c, v) in &self.current {
            out[r] += v * x[c];
        }
        for &(r, c, v) in &self.previous {
            out[r] += v * x_prev[c];
        }
        out
    }
}

/// Numeric stage data for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInstance {
    pub n_dec: usize,
    pub state: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub equalities: ResolvedBlock,
    pub inequalities: ResolvedBlock,
    pub cones: Vec<RotatedConeBlock>,
}

impl StageInstance {
    pub fn state_of(&self, decision: &[f64]) -> Vec<f64> {
        self.state.iter().map(|&i| decision[i]).collect()
    }

    pub fn stage_cost(&self, decision: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(decision)
            .map(|(c, x)| c * x)
            .sum()
    }

    /// Largest constraint violation of `decision` given `x_prev`.
    pub fn max_violation(&self, decision: &[f64], x_prev: &[f64]) -> f64 {
        let eq = self.equalities.activity(decision, x_prev);
        let ineq = self.inequalities.activity(decision, x_prev);
        let mut worst: f64 = 0.0;
        for (a, b) in eq.iter().zip(&self.equalities.rhs) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in ineq.iter().zip(&self.inequalities.rhs) {
            worst = worst.max(a - b);
        }
        for (i, x) in decision.iter().enumerate() {
            worst = worst.max(self.lower[i] - x).max(x - self.upper[i]);
        }
        for cone in &self.cones {
            worst = worst.max(cone.violation(decision));
        }
        worst
    }
}
