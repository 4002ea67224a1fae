//! Prox-center and penalty schedules, and the variant names built from them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterRule {
    /// Last trial point `x_t^{k-1}`.
    Prev,
    /// Mean of all previous trial points.
    Avg,
    /// Weights `decay^{k-1-j}` on trial point `j`: recent points weigh most.
    Weighted { decay: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRule {
    Zero,
    /// `ρ^k`.
    Reg1 {
        rho: f64,
    },
    /// `1/k²`.
    Reg2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxScheme {
    pub center: CenterRule,
    pub penalty: PenaltyRule,
}

impl ProxScheme {
    pub const NONE: ProxScheme = ProxScheme {
        center: CenterRule::Prev,
        penalty: PenaltyRule::Zero,
    };

    pub fn new(center: CenterRule, penalty: PenaltyRule) -> Result<Self> {
        let scheme = ProxScheme { center, penalty };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if let PenaltyRule::Reg1 { rho } = self.penalty {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::ParameterOutOfRange(format!(
                    "REG1 rho = {rho} not in (0, 1)"
                )));
            }
        }
        if let CenterRule::Weighted { decay } = self.center {
            if !(0.0..=1.0).contains(&decay) {
                return Err(Error::ParameterOutOfRange(format!(
                    "decay = {decay} not in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn is_regularized(&self) -> bool {
        self.penalty != PenaltyRule::Zero
    }

    /// `λ_{t,k}`, forced to zero at the last stage and the first iteration.
    pub fn penalty_weight(&self, t: usize, k: usize, horizon: usize) -> f64 {
        if t >= horizon || k <= 1 {
            return 0.0;
        }
        match self.penalty {
            PenaltyRule::Zero => 0.0,
            PenaltyRule::Reg1 { rho } => libm::pow(rho, k as f64),
            PenaltyRule::Reg2 => 1.0 / (k as f64 * k as f64),
        }
    }

    /// Prox-center from the trial history `x^1..x^{k-1}` of one stage.
    pub fn prox_center(&self, history: &[Vec<f64>]) -> Result<Vec<f64>> {
        let last = history.last().ok_or(Error::EmptyHistory)?;
        match self.center {
            CenterRule::Prev => Ok(last.clone()),
            CenterRule::Avg => weighted_center(history, &alloc::vec![1.0; history.len()]),
            CenterRule::Weighted { decay } => {
                let k1 = history.len();
                let weights: Vec<f64> = (1..=k1)
                    .map(|j| libm::pow(decay, (k1 - j) as f64))
                    .collect();
                weighted_center(history, &weights)
            }
        }
    }
}

/// `Σ γ_j x^j / Σ γ_j` for nonnegative weights with positive sum.
pub fn weighted_center(history: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let first = history.first().ok_or(Error::EmptyHistory)?;
    let total: f64 = weights.iter().sum();
    if weights.len() != history.len() || weights.iter().any(|w| *w < 0.0) || !(total > 0.0) {
        return Err(Error::ParameterOutOfRange(
            "center weights must be nonnegative with positive sum, one per trial point".into(),
        ));
    }
    let mut center = alloc::vec![0.0; first.len()];
    for (x, w) in history.iter().zip(weights) {
        for (c, v) in center.iter_mut().zip(x) {
            *c += w * v;
        }
    }
    center.iter_mut().for_each(|c| *c /= total);
    Ok(center)
}

/// A named algorithm: deterministic (DDP/REDDP) or stochastic (SDDP/SDDP-REG)
/// family plus its prox scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub stochastic: bool,
    pub scheme: ProxScheme,
}

impl Variant {
    pub const DETERMINISTIC_NAMES: [&'static str; 5] = [
        "DDP",
        "REDDP-PREV-REG1-<rho>",
        "REDDP-PREV-REG2",
        "REDDP-AVG-REG1-<rho>",
        "REDDP-AVG-REG2",
    ];
    pub const STOCHASTIC_NAMES: [&'static str; 5] = [
        "SDDP",
        "SDDP-REG-PREV-REG1-<rho>",
        "SDDP-REG-PREV-REG2",
        "SDDP-REG-AVG-REG1-<rho>",
        "SDDP-REG-AVG-REG2",
    ];

    /// All recognized names, for error messages.
    pub fn known_names() -> String {
        let mut all: Vec<&str> = Self::DETERMINISTIC_NAMES.to_vec();
        all.extend(Self::STOCHASTIC_NAMES);
        all.join(", ")
    }

    /// DDP and the six REDDP variants compared in the deterministic study.
    pub fn deterministic_suite() -> Vec<Variant> {
        [
            "DDP",
            "REDDP-PREV-REG1-0.2",
            "REDDP-PREV-REG1-0.9",
            "REDDP-PREV-REG2",
            "REDDP-AVG-REG1-0.2",
            "REDDP-AVG-REG1-0.9",
            "REDDP-AVG-REG2",
        ]
        .iter()
        .map(|n| n.parse().expect("built-in names parse"))
        .collect()
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(name: &str) -> Result<Self> {
        let unknown = || {
            Error::UnknownVariant(format!(
                "{name}; expected one of {}",
                Variant::known_names()
            ))
        };
        let (stochastic, rest) = match name {
            "DDP" => {
                return Ok(Variant {
                    stochastic: false,
                    scheme: ProxScheme::NONE,
                })
            }
            "SDDP" => {
                return Ok(Variant {
                    stochastic: true,
                    scheme: ProxScheme::NONE,
                })
            }
            _ => {
                if let Some(r) = name.strip_prefix("REDDP-") {
                    (false, r)
                } else if let Some(r) = name.strip_prefix("SDDP-REG-") {
                    (true, r)
                } else {
                    return Err(unknown());
                }
            }
        };
        let parts: Vec<&str> = rest.split('-').collect();
        let (center, penalty_parts) = match parts.as_slice() {
            ["PREV", tail @ ..] => (CenterRule::Prev, tail),
            ["AVG", tail @ ..] => (CenterRule::Avg, tail),
            ["WEIGHTED", decay, tail @ ..] => {
                let decay = decay.parse().map_err(|_| unknown())?;
                (CenterRule::Weighted { decay }, tail)
            }
            _ => return Err(unknown()),
        };
        let penalty = match penalty_parts {
            ["REG2"] => PenaltyRule::Reg2,
            ["REG1", rho] => PenaltyRule::Reg1 {
                rho: rho.parse().map_err(|_| unknown())?,
            },
            ["ZERO"] => PenaltyRule::Zero,
            _ => return Err(unknown()),
        };
        Ok(Variant {
            stochastic,
            scheme: ProxScheme::new(center, penalty)?,
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = if self.stochastic { "SDDP" } else { "DDP" };
        if self.scheme == ProxScheme::NONE {
            return f.write_str(family);
        }
        let prefix = if self.stochastic { "SDDP-REG" } else { "REDDP" };
        let center = match self.scheme.center {
            CenterRule::Prev => "PREV".to_string(),
            CenterRule::Avg => "AVG".to_string(),
            CenterRule::Weighted { decay } => format!("WEIGHTED-{decay}"),
        };
        let penalty = match self.scheme.penalty {
            PenaltyRule::Zero => "ZERO".to_string(),
            PenaltyRule::Reg1 { rho } => format!("REG1-{rho}"),
            PenaltyRule::Reg2 => "REG2".to_string(),
        };
        write!(f, "{prefix}-{center}-{penalty}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scheme(center: CenterRule, penalty: PenaltyRule) -> ProxScheme {
        ProxScheme::new(center, penalty).unwrap()
    }

    #[test]
    fn penalty_schedules() {
        let reg2 = scheme(CenterRule::Prev, PenaltyRule::Reg2);
        let reg1 = scheme(CenterRule::Prev, PenaltyRule::Reg1 { rho: 0.2 });
        for s in [reg1, reg2, ProxScheme::NONE] {
            assert_eq!(s.penalty_weight(2, 1, 5), 0.0);
            assert_eq!(s.penalty_weight(5, 4, 5), 0.0);
        }
        assert_eq!(reg2.penalty_weight(2, 3, 5), 1.0 / 9.0);
        assert!((reg1.penalty_weight(2, 2, 5) - 0.04).abs() < 1e-15);
        assert_eq!(ProxScheme::NONE.penalty_weight(2, 7, 5), 0.0);
        assert!(ProxScheme::new(CenterRule::Prev, PenaltyRule::Reg1 { rho: 1.0 }).is_err());
    }

    #[test]
    fn centers() {
        let prev = scheme(CenterRule::Prev, PenaltyRule::Reg2);
        let avg = scheme(CenterRule::Avg, PenaltyRule::Reg2);
        assert_eq!(prev.prox_center(&[vec![0.7]]).unwrap(), vec![0.7]);
        assert_eq!(avg.prox_center(&[vec![0.0], vec![1.0]]).unwrap(), vec![0.5]);
        assert_eq!(prev.prox_center(&[]), Err(Error::EmptyHistory));
        let history = [vec![0.1, 2.0], vec![0.4, 1.0], vec![0.9, 3.0]];
        assert_eq!(
            weighted_center(&history, &[0.0, 0.0, 1.0]).unwrap(),
            prev.prox_center(&history).unwrap()
        );
        let sharp = scheme(CenterRule::Weighted { decay: 0.0 }, PenaltyRule::Reg2);
        assert_eq!(sharp.prox_center(&history).unwrap(), history[2]);
        let flat = scheme(CenterRule::Weighted { decay: 1.0 }, PenaltyRule::Reg2);
        assert_eq!(
            flat.prox_center(&history).unwrap(),
            avg.prox_center(&history).unwrap()
        );
    }

    #[test]
    fn names_round_trip() {
        for name in [
            "DDP",
            "SDDP",
            "REDDP-PREV-REG1-0.2",
            "REDDP-AVG-REG1-0.9",
            "REDDP-PREV-REG2",
            "REDDP-AVG-REG2",
            "SDDP-REG-PREV-REG2",
            "SDDP-REG-AVG-REG1-0.5",
            "REDDP-WEIGHTED-0.5-REG2",
        ] {
            let v: Variant = name.parse().unwrap();
            assert_eq!(v.to_string(), name);
        }
        assert_eq!(Variant::deterministic_suite().len(), 7);
        let err = "FOO".parse::<Variant>().unwrap_err();
        assert!(err.to_string().contains("REDDP-PREV-REG2"));
        assert!("REDDP-PREV-REG1-1.5".parse::<Variant>().is_err());
    }
}
