use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid degrees of freedom {dof} for dimension {dim}")]
    InvalidDof { dof: f64, dim: usize },
    #[error("all categorical weights are zero")]
    AllZeroWeights,
    #[error("innovation covariance is singular at step {step}")]
    SingularInnovationCovariance { step: usize },
    #[error("I - sum(B) is near singular (condition number {cond:e})")]
    NearSingularLongRun { cond: f64 },
    #[error("all {count} draws have a near-singular I - sum(B)")]
    AllDrawsSingular { count: usize },
    #[error("training sample has {got} observations, at least {need} required")]
    InsufficientTrainingData { got: usize, need: usize },
    #[error("regressors are collinear: {0}")]
    CollinearRegressors(String),
    #[error("chain diverged at iteration {iteration}: {reason}")]
    ChainDiverged { iteration: usize, reason: String },
    #[error("chain contains no retained draws")]
    EmptyChain,
    #[error("exogenous path too short: need {need} values, have {have}")]
    ExoPathTooShort { need: usize, have: usize },
    #[error("no realized values available for evaluation")]
    NoRealizedValues,
    #[error("simulation exploded at t={t} (|y| = {value:e})")]
    ExplosiveSimulation { t: usize, value: f64 },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-positive level {value} in column `{column}` at row {row}")]
    NonPositiveLevel { row: usize, column: String, value: f64 },
    #[error("date gap between row {row} ({prev}) and row {next_row} ({next})")]
    DateGap { row: usize, prev: String, next_row: usize, next: String },
    #[error("parse error at row {row}: {message}")]
    ParseError { row: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed chain file: {0}")]
    ChainFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidDof { .. } | Error::DimensionMismatch(_) => 2,
            Error::MissingColumn(_)
            | Error::NonPositiveLevel { .. }
            | Error::DateGap { .. }
            | Error::ParseError { .. }
            | Error::InsufficientTrainingData { .. }
            | Error::ExoPathTooShort { .. }
            | Error::NoRealizedValues
            | Error::ChainFormat(_)
            | Error::EmptyChain
            | Error::Io(_)
            | Error::Csv(_) => 3,
            Error::NotPositiveDefinite { .. }
            | Error::AllZeroWeights
            | Error::SingularInnovationCovariance { .. }
            | Error::NearSingularLongRun { .. }
            | Error::AllDrawsSingular { .. }
            | Error::CollinearRegressors(_)
            | Error::ChainDiverged { .. }
            | Error::ExplosiveSimulation { .. } => 4,
        }
    }
}
