use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("stage {stage} has no realizations")]
    EmptyStage { stage: usize },
    #[error("stage {stage}: probability {value} is not positive")]
    NonPositiveProbability { stage: usize, value: f64 },
    #[error("stage {stage}: probabilities sum to {sum}, expected 1")]
    ProbabilitySumMismatch { stage: usize, sum: f64 },
    #[error("first stage must be deterministic, found {count} realizations")]
    RandomFirstStage { count: usize },
    #[error("scenario tree has {nodes} nodes, budget is {budget}")]
    TreeTooLarge { nodes: u128, budget: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("realization has no field `{0}`")]
    UnknownField(String),
    #[error("stage {stage} subproblem is infeasible (relatively complete recourse violated)")]
    Infeasible { stage: usize },
    #[error("stage {stage} subproblem is unbounded (missing bound)")]
    Unbounded { stage: usize },
    #[error("solver failure at stage {stage}: {message}")]
    SolverNumericalFailure { stage: usize, message: String },
    #[error("stage solution carries no usable duals")]
    MissingDuals,
    #[error("cuts must be computed from solves without a prox term")]
    ProxInCutSolve,
    #[error("cut has non-finite coefficients")]
    NonFiniteCut,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("prox-center requested without trial history")]
    EmptyHistory,
    #[error("invalid portfolio parameters: {0}")]
    InvalidParams(String),
    #[error("return scenarios do not match the model: {0}")]
    ScenarioShapeMismatch(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        match self {
            Error::Infeasible { .. } => Error::Infeasible { stage },
            Error::Unbounded { .. } => Error::Unbounded { stage },
            Error::SolverNumericalFailure { message, .. } => {
                Error::SolverNumericalFailure { stage, message }
            }
            other => other,
        }
    }
}
