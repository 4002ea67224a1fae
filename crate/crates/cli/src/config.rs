//! Run configuration: one JSON document with `problem`, `algorithm`,
//! `stopping` and `output` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sddp_reg_core::lattice::DEFAULT_NODE_BUDGET;
use sddp_reg_core::portfolio::{
    build_direct_cost_models, build_market_impact_models, generate_synthetic_returns,
    PortfolioParams, ReturnScenarios,
};
use sddp_reg_core::{DeterministicConfig, GapMode, MultistageProblem, RiskSpec, Stopping, Variant};

use crate::error::CliError;
use crate::io::load_returns_csv;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub stopping: Option<StoppingConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(default)]
    pub risk: RiskSpec,
    #[serde(default = "default_node_budget")]
    pub node_budget: usize,
    #[serde(flatten)]
    pub source: ProblemSource,
}

fn default_node_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Portfolio {
        portfolio: PortfolioParams,
        #[serde(default)]
        costs: CostModel,
        returns: ReturnsSource,
    },
    /// A problem given inline as stage models plus lattice.
    Model { model: MultistageProblem },
    /// Same, read from a JSON file.
    ModelFile { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    #[default]
    Direct,
    MarketImpact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ReturnsSource {
    Synthetic {
        seed: u64,
        samples: usize,
        drift: f64,
        vol: f64,
    },
    /// Historical gross returns; `samples` rows per stage (all rows when
    /// absent).
    Csv {
        path: PathBuf,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    Scenarios {
        scenarios: ReturnScenarios,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub variant: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub paths_per_iteration: usize,
    /// Forward passes over the whole tree instead of sampled paths.
    #[serde(default)]
    pub full_tree: bool,
    #[serde(default = "default_tolerance")]
    pub solver_tolerance: f64,
}

fn one() -> usize {
    1
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingConfig {
    /// Deterministic gap test.
    Epsilon {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        gap_mode: GapMode,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    /// Statistical gap test.
    Gap {
        threshold: f64,
        #[serde(default = "default_n_sim")]
        n_sim: usize,
        #[serde(default = "default_confidence")]
        confidence: f64,
        #[serde(default = "one")]
        check_every: usize,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    FixedIterations {
        iterations: usize,
    },
}

fn default_epsilon() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    1000
}
fn default_n_sim() -> usize {
    500
}
fn default_confidence() -> f64 {
    0.95
}

/// Iterations of risk-averse runs, which have no statistical gap test.
pub const RISK_AVERSE_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write one cut CSV per stage.
    #[serde(default = "yes")]
    pub cuts: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            cuts: true,
        }
    }
}

fn yes() -> bool {
    true
}

/// A parsed config with the digest of its bytes and the directory relative
/// paths are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub digest: String,
    pub base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        let config: Config = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
            path: path.into(),
            source,
        })?;
        Ok(LoadedConfig {
            config,
            digest: sha256_hex(&bytes),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        Ok(self.config.algorithm.variant.parse()?)
    }

    pub fn build_problem(&self) -> Result<MultistageProblem, CliError> {
        build_problem(&self.config.problem, |p| self.resolve(p))
    }

    pub fn deterministic_config(&self) -> Result<DeterministicConfig, CliError> {
        deterministic_config(self.config.stopping)
    }

    pub fn stochastic_stopping(&self) -> Result<Stopping, CliError> {
        stochastic_stopping(self.config.stopping, &self.config.problem.risk)
    }
}

pub fn build_problem(
    problem: &ProblemConfig,
    resolve: impl Fn(&Path) -> PathBuf,
) -> Result<MultistageProblem, CliError> {
    match &problem.source {
        ProblemSource::Portfolio {
            portfolio,
            costs,
            returns,
        } => {
            let mut params = portfolio.clone();
            // Nested risk has to see the final returns as their own stage.
            params.terminal_stage |= !problem.risk.is_neutral();
            let scenarios = match returns {
                ReturnsSource::Synthetic {
                    seed,
                    samples,
                    drift,
                    vol,
                } => generate_synthetic_returns(
                    *seed,
                    params.n,
                    params.horizon,
                    *samples,
                    *drift,
                    *vol,
                )?,
                ReturnsSource::Csv {
                    path,
                    samples,
                    seed,
                } => {
                    let rows = load_returns_csv(&resolve(path))?;
                    let m = samples.unwrap_or(rows.len());
                    ReturnScenarios::from_history(&rows, params.horizon, m, *seed)?
                }
                ReturnsSource::Scenarios { scenarios } => scenarios.clone(),
            };
            Ok(match costs {
                CostModel::Direct => build_direct_cost_models(&params, &scenarios)?,
                CostModel::MarketImpact => build_market_impact_models(&params, &scenarios)?,
            })
        }
        ProblemSource::Model { model } => Ok(model.clone()),
        ProblemSource::ModelFile { path } => {
            let path = resolve(path);
            let bytes = std::fs::read(&path).map_err(CliError::io(&path))?;
            serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path, source })
        }
    }
}

pub fn deterministic_config(
    stopping: Option<StoppingConfig>,
) -> Result<DeterministicConfig, CliError> {
    match stopping {
        None => Ok(DeterministicConfig::default()),
        Some(StoppingConfig::Epsilon {
            epsilon,
            gap_mode,
            max_iter,
        }) => Ok(DeterministicConfig {
            epsilon,
            gap_mode,
            max_iter,
        }),
        Some(other) => Err(CliError::Config(format!(
            "deterministic runs stop on `epsilon`, got {other:?}"
        ))),
    }
}

/// Gap stopping at 5% by default; risk-averse runs get a fixed budget of
/// iterations unless one is configured.
pub fn stochastic_stopping(
    stopping: Option<StoppingConfig>,
    risk: &RiskSpec,
) -> Result<Stopping, CliError> {
    let averse = !risk.is_neutral();
    match stopping {
        Some(StoppingConfig::FixedIterations { iterations }) => {
            Ok(Stopping::FixedIterations { iterations })
        }
        _ if averse => {
            log::info!("risk-averse run: {RISK_AVERSE_ITERATIONS} fixed iterations");
            Ok(Stopping::FixedIterations {
                iterations: RISK_AVERSE_ITERATIONS,
            })
        }
        None => Ok(Stopping::Gap {
            threshold: 0.05,
            n_sim: default_n_sim(),
            confidence: default_confidence(),
            check_every: 1,
            max_iter: default_max_iter(),
        }),
        Some(StoppingConfig::Gap {
            threshold,
            n_sim,
            confidence,
            check_every,
            max_iter,
        }) => Ok(Stopping::Gap {
            threshold,
            n_sim,
            confidence,
            check_every,
            max_iter,
        }),
        Some(StoppingConfig::Epsilon { .. }) => Err(CliError::Config(
            "stochastic runs stop on `gap` or `fixed_iterations`".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PORTFOLIO: &str = r#"{
        "problem": {
            "kind": "portfolio",
            "portfolio": {"n": 2, "horizon": 3, "budget": 1000.0, "sell_cost": [0.01, 0.01],
                          "buy_cost": [0.01, 0.01], "position_limit": [0.5, 0.5], "cash_return": 1.002,
                          "market_impact": [0.0003, 0.0003]},
            "returns": {"source": "synthetic", "seed": 1, "samples": 2, "drift": 0.01, "vol": 0.05}
        },
        "algorithm": {"variant": "SDDP-REG-PREV-REG2", "seed": 3}
    }"#;

    #[test]
    fn parses_portfolio_config() {
        let cfg: Config = serde_json::from_str(PORTFOLIO).unwrap();
        assert_eq!(cfg.algorithm.paths_per_iteration, 1);
        assert!(cfg.output.cuts);
        let problem = build_problem(&cfg.problem, Path::to_path_buf).unwrap();
        assert_eq!(problem.horizon(), 3);
        assert_eq!(problem.value_scale, 1000.0);
    }

    #[test]
    fn risk_aversion_adds_terminal_stage_and_fixed_budget() {
        let mut cfg: Config = serde_json::from_str(PORTFOLIO).unwrap();
        cfg.problem.risk = RiskSpec::mean_avar(0.1, 0.1).unwrap();
        assert_eq!(
            build_problem(&cfg.problem, Path::to_path_buf)
                .unwrap()
                .horizon(),
            4
        );
        assert_eq!(
            stochastic_stopping(None, &cfg.problem.risk).unwrap(),
            Stopping::FixedIterations { iterations: 50 }
        );
    }

    #[test]
    fn stopping_sections() {
        assert_eq!(
            deterministic_config(None).unwrap(),
            DeterministicConfig::default()
        );
        let fixed = Some(StoppingConfig::FixedIterations { iterations: 3 });
        assert!(deterministic_config(fixed).is_err());
        assert!(matches!(
            stochastic_stopping(None, &RiskSpec::Expectation).unwrap(),
            Stopping::Gap { .. }
        ));
        let text = r#"{"kind": "epsilon", "max_iter": 5}"#;
        let s: StoppingConfig = serde_json::from_str(text).unwrap();
        assert_eq!(deterministic_config(Some(s)).unwrap().max_iter, 5);
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
