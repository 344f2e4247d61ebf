use thiserror::Error;

/// Errors raised by graph validation, the solvers and the learning routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not a histogram: weights sum {sum}")]
    NotHistogram { what: String, sum: f64 },

    #[error("{what} has a negative weight {value} at index {index}")]
    NegativeWeight {
        what: String,
        index: usize,
        value: f64,
    },

    #[error("non-finite entry in {what} at {index:?}")]
    NonFinite { what: String, index: Vec<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry})")]
    Asymmetric { max_asymmetry: f64 },

    #[error("edge label {label} out of range for vocabulary of size {vocab_size}")]
    LabelOutOfRange { label: usize, vocab_size: usize },

    #[error("duplicate edge triplet for pair ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("pair ({i}, {j}) is unreachable")]
    Unreachable { i: usize, j: usize },

    #[error("infeasible marginals: source mass {source_mass}, target mass {target_mass}")]
    InfeasibleMarginals { source_mass: f64, target_mass: f64 },

    #[error("transport plan violates its marginals (max deviation {deviation})")]
    InvalidPlan { deviation: f64 },

    #[error("linear OT solver hit the pivot cap after {iterations} pivots")]
    PivotLimit { iterations: usize },

    #[error("linear OT solution failed its optimality certificate (min reduced cost {min_reduced_cost})")]
    NotOptimal { min_reduced_cost: f64 },

    #[error("{0}")]
    MissingFeatures(String),

    #[error("unsupported node metric for this operation: {0}")]
    UnsupportedMetric(String),

    #[error("division by zero weight at index {index}")]
    ZeroWeight { index: usize },

    #[error("Cholesky factorization failed (smallest eigenvalue estimate {min_eigenvalue})")]
    Factorization { min_eigenvalue: f64 },

    #[error("all surrogate weights are non-positive")]
    DegenerateWeights,

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}: at {pointer}: {message}")]
    Format {
        path: String,
        pointer: String,
        message: String,
    },

    #[error("failed pair ({i}, {j}): {source}")]
    PairFailed {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for numerical failures of a solver, as opposed to invalid input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::PivotLimit { .. } | Error::NotOptimal { .. } | Error::Factorization { .. } => {
                true
            }
            Error::PairFailed { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }

    pub(crate) fn dims(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
