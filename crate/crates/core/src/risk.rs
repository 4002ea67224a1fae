//! Expectation and mean-AV@R aggregation of child values into one cut.
//!
//! Convention: values are losses, larger is worse.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskSpec {
    #[default]
    Expectation,
    /// `(1-λ)·E + λ·AV@R_α`.
    MeanAvar { lambda: f64, alpha: f64 },
}

impl RiskSpec {
    pub fn mean_avar(lambda: f64, alpha: f64) -> Result<Self> {
        let spec = RiskSpec::MeanAvar { lambda, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let RiskSpec::MeanAvar { lambda, alpha } = *self {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::ParameterOutOfRange(format!(
                    "lambda = {lambda} not in [0, 1]"
                )));
            }
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::ParameterOutOfRange(format!(
                    "alpha = {alpha} not in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// True when the measure is the plain expectation.
    pub fn is_neutral(&self) -> bool {
        match *self {
            RiskSpec::Expectation => true,
            RiskSpec::MeanAvar { lambda, alpha } => lambda == 0.0 || alpha == 1.0,
        }
    }
}

fn check_distribution(values: &[f64], probs: &[f64]) -> Result<()> {
    if values.is_empty() || values.len() != probs.len() {
        return Err(Error::InvalidDistribution(format!(
            "{} values for {} probabilities",
            values.len(),
            probs.len()
        )));
    }
    if probs.iter().any(|p| !(*p >= 0.0)) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDistribution(
            "negative probability or non-finite value".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {sum}"
        )));
    }
    Ok(())
}

/// Subgradient weights of `AV@R_α`: mass `p/α` on the worst outcomes up to
/// cumulative probability `α`, with the boundary atom split. Ties keep input
/// order.
fn avar_weights(values: &[f64], probs: &[f64], alpha: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut weights = alloc::vec![0.0; values.len()];
    let mut remaining = alpha;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = probs[i].min(remaining);
        weights[i] = take / alpha;
        remaining -= take;
    }
    weights
}

/// Returns `(ρ(values), weights)` with `ρ = Σ weights·values`.
pub fn aggregate(values: &[f64], probs: &[f64], spec: &RiskSpec) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    check_distribution(values, probs)?;
    let weights = match *spec {
        RiskSpec::MeanAvar { lambda, alpha } if !spec.is_neutral() => {
            let tail = avar_weights(values, probs, alpha);
            probs
                .iter()
                .zip(&tail)
                .map(|(p, w)| (1.0 - lambda) * p + lambda * w)
                .collect()
        }
        _ => probs.to_vec(),
    };
    let value = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    Ok((value, weights))
}

/// `min_u u + (1/α)·E[(Z-u)_+]` over the atoms plus a uniform grid of 10⁴
/// points spanning them.
pub fn avar_value_oracle(values: &[f64], probs: &[f64], alpha: f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let objective = |u: f64| {
        u + values
            .iter()
            .zip(probs)
            .map(|(v, p)| p * (v - u).max(0.0))
            .sum::<f64>()
            / alpha
    };
    let grid = (0..=10_000).map(|i| lo + (hi - lo) * i as f64 / 10_000.0);
    values
        .iter()
        .copied()
        .chain(grid)
        .map(objective)
        .fold(f64::INFINITY, f64::min)
}
