use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("required column '{0}' is absent")]
    MissingColumn(String),

    #[error("variable '{0}' is not in the dataset")]
    MissingVariable(String),

    #[error("unparseable numeric cell at row {row}, column '{column}': '{value}'")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate observation for key ({entity}, {period})")]
    DuplicateKey { entity: String, period: String },

    #[error("period '{0}' is not in the dataset")]
    MissingPeriod(String),

    #[error("regressor '{0}' is constant in the estimation sample")]
    ConstantRegressor(String),

    #[error("regressor '{variable}' is collinear: {reason}")]
    Collinear { variable: String, reason: String },

    #[error("{n_obs} observations are not enough for {n_params} parameters")]
    InsufficientObservations { n_obs: usize, n_params: usize },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("residual degrees of freedom are zero")]
    ZeroDof,

    #[error("covariance sub-matrix of dimension {dim} is singular (rank {rank})")]
    SingularCovariance { rank: usize, dim: usize },

    #[error("standard error of '{0}' is zero")]
    ZeroStandardError(String),

    #[error("coefficient '{0}' is not in the fit")]
    UnknownCoefficient(String),

    #[error("invalid cluster assignment: {0}")]
    Cluster(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing test for report: {0}")]
    MissingTest(String),

    #[error("model specification mismatch: {0}")]
    SpecMismatch(String),
}
