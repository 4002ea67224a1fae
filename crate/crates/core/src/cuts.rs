//! Polyhedral lower approximations of cost-to-go functions.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Affine minorant `x ↦ intercept + slope·x` built at `trial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub intercept: f64,
    pub slope: Vec<f64>,
    pub trial: Vec<f64>,
    pub iteration: usize,
}

impl Cut {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.slope
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (b, v)| acc + b * v)
    }
}

/// `max(lower_bound, max_ℓ cut_ℓ(x))` for the cost-to-go of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPool {
    pub stage: usize,
    pub lower_bound: f64,
    pub dim: usize,
    cuts: Vec<Cut>,
}

impl CutPool {
    pub fn new(stage: usize, dim: usize, lower_bound: f64) -> Self {
        CutPool {
            stage,
            lower_bound,
            dim,
            cuts: Vec::new(),
        }
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Adds the cut through `(trial, value)` with the given slope.
    pub fn add_cut(
        &mut self,
        value: f64,
        slope: Vec<f64>,
        trial: Vec<f64>,
        iteration: usize,
    ) -> Result<()> {
        if slope.len() != self.dim || trial.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "cut for stage {} has slope/trial of length {}/{}, expected {}",
                self.stage,
                slope.len(),
                trial.len(),
                self.dim
            )));
        }
        let finite = value.is_finite() && slope.iter().chain(&trial).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteCut);
        }
        let intercept = value - slope.iter().zip(&trial).map(|(b, x)| b * x).sum::<f64>();
        self.cuts.push(Cut {
            intercept,
            slope,
            trial,
            iteration,
        });
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.cuts
            .iter()
            .map(|c| c.eval(x))
            .fold(self.lower_bound, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn flat_cut_dominates_lower_bound() {
        let mut p = CutPool::new(2, 1, -10.0);
        assert_eq!(p.evaluate(&[3.0]), -10.0);
        p.add_cut(5.0, vec![0.0], vec![0.0], 1).unwrap();
        assert_eq!(p.evaluate(&[-7.0]), 5.0);
        assert_eq!(p.evaluate(&[7.0]), 5.0);
    }

    #[test]
    fn duplicate_cut_is_idempotent() {
        let mut p = CutPool::new(2, 1, -10.0);
        p.add_cut(1.0, vec![2.0], vec![0.5], 1).unwrap();
        let before: Vec<f64> = (-5..5).map(|i| p.evaluate(&[i as f64])).collect();
        p.add_cut(1.0, vec![2.0], vec![0.5], 2).unwrap();
        let after: Vec<f64> = (-5..5).map(|i| p.evaluate(&[i as f64])).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn two_cuts_give_absolute_value() {
        let mut p = CutPool::new(2, 1, -10.0);
        p.add_cut(1.0, vec![1.0], vec![0.0], 1).unwrap();
        p.add_cut(1.0, vec![-1.0], vec![0.0], 2).unwrap();
        for x in [-2.5, -1.0, 0.0, 0.3, 4.0] {
            assert_eq!(p.evaluate(&[x]), 1.0 + f64::abs(x));
        }
    }

    #[test]
    fn affine_evaluation() {
        let mut p = CutPool::new(2, 1, f64::NEG_INFINITY);
        p.add_cut(0.0, vec![2.0], vec![0.0], 1).unwrap();
        assert_eq!(p.evaluate(&[3.0]), 6.0);
    }

    #[test]
    fn rejects_bad_cuts() {
        let mut p = CutPool::new(2, 2, 0.0);
        assert!(matches!(
            p.add_cut(0.0, vec![1.0], vec![0.0, 0.0], 1),
            Err(Error::DimensionMismatch(_))
        ));
        assert_eq!(
            p.add_cut(f64::NAN, vec![1.0, 0.0], vec![0.0, 0.0], 1),
            Err(Error::NonFiniteCut)
        );
    }

    proptest! {
        #[test]
        fn evaluation_is_brute_force_max(
            cuts in prop::collection::vec((-5.0..5.0f64, -3.0..3.0f64, -3.0..3.0f64), 1..100),
            points in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..100),
        ) {
            let mut pool = CutPool::new(3, 2, -50.0);
            for (i, &(a, b1, b2)) in cuts.iter().enumerate() {
                pool.add_cut(a, vec![b1, b2], vec![0.0, 0.0], i).unwrap();
            }
            for &(x1, x2) in &points {
                let brute = cuts
                    .iter()
                    .map(|&(a, b1, b2)| a + b1 * x1 + b2 * x2)
                    .fold(-50.0, f64::max);
                prop_assert_eq!(pool.evaluate(&[x1, x2]), brute);
            }
        }

        #[test]
        fn appending_never_decreases(
            cuts in prop::collection::vec((-5.0..5.0f64, -3.0..3.0f64, -2.0..2.0f64), 1..30),
            x in -4.0..4.0f64,
        ) {
            let mut pool = CutPool::new(2, 1, -20.0);
            let mut last = pool.evaluate(&[x]);
            for (i, &(v, b, t)) in cuts.iter().enumerate() {
                pool.add_cut(v, vec![b], vec![t], i).unwrap();
                let now = pool.evaluate(&[x]);
                prop_assert!(now >= last);
                prop_assert!(pool.evaluate(&[t]) >= v - 1e-12);
                last = now;
            }
        }
    }
}
