use thiserror::Error;

/// Errors surfaced by model construction, fitting, tuning, and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown family '{0}'")]
    UnknownFamily(String),

    #[error("response value {value} at row {row} outside the {family} domain ({domain})")]
    ResponseDomain {
        family: &'static str,
        domain: &'static str,
        value: f64,
        row: usize,
    },

    #[error("parameter value out of range: {0}")]
    ParameterDomain(String),

    #[error("offset search did not converge for parameter '{param}' after {cycles} cycles (last change {change:e})")]
    OffsetNonConvergence {
        param: &'static str,
        cycles: usize,
        change: f64,
    },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("column '{name}' is {found}, expected {expected}")]
    ColumnType {
        name: String,
        found: &'static str,
        expected: &'static str,
    },

    #[error("level '{level}' of column '{column}' was not present at fit time")]
    UnseenLevel { column: String, level: String },

    #[error("degrees of freedom {requested} not attainable for '{learner}' (feasible range {lo:.6}..{hi:.6})")]
    DfInfeasible {
        learner: String,
        requested: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degrees-of-freedom calibration failed for '{learner}': {reason}")]
    Calibration { learner: String, reason: String },

    #[error("singular normal equations in learner '{0}'")]
    SingularSystem(String),

    #[error("non-finite gradient at iteration {iteration}, parameter '{param}', observation {observation}")]
    NonFiniteGradient {
        iteration: usize,
        param: String,
        observation: usize,
    },

    #[error("fit diverged: risk is non-finite after iteration {iteration} (consider mad stabilization or rescaling the response)")]
    Diverged { iteration: usize },

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("dataset fingerprint mismatch: model was fitted to different data (expected {expected:016x}/{expected_content:016x}, got {found:016x}/{found_content:016x})")]
    FingerprintMismatch {
        expected: u64,
        expected_content: u64,
        found: u64,
        found_content: u64,
    },

    #[error("model has no attached training data; only prediction is available")]
    DataNotAttached,

    #[error("adjacency: {0}")]
    Adjacency(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
