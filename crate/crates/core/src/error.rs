use thiserror::Error;

/// Errors raised by the sampling, analysis and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("esssup refinement did not converge after {rounds} rounds (cell {cell:?}, last change {delta:e})")]
    NonConvergence {
        rounds: usize,
        cell: Vec<i64>,
        delta: f64,
    },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("quadrature failure: entries moved by {change:e} when the order was doubled (tolerance {tolerance:e})")]
    QuadratureFailure { change: f64, tolerance: f64 },

    #[error("degenerate Gram matrix: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}")]
    DegenerateGram { lambda_min: f64, lambda_max: f64 },

    #[error("sampling set is not separated: points {0} and {1} coincide")]
    NotSeparated(usize, usize),

    #[error("sampling set needs at least two points, got {0}")]
    TooFewPoints(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate operator: eta = {eta:e} below 1e-12 * beta (beta = {beta:e})")]
    DegenerateOperator { eta: f64, beta: f64 },

    #[error("perturbation budget exceeded: epsilon = {epsilon} but the budget is {budget}")]
    BudgetExceeded { epsilon: f64, budget: f64 },

    #[error("normal equations are singular at this truncation")]
    SingularNormalEquations,

    #[error("nu = {0} is not below 1")]
    InadmissibleNu(f64),

    #[error("epsilon = {epsilon} is outside the admissible range (0, {sup})")]
    InadmissibleEpsilon { epsilon: f64, sup: f64 },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
