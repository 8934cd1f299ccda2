use thiserror::Error;

/// Errors raised by the discretization, the solvers and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation failure: {0}")]
    Evaluation(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error(
        "partitioned iteration did not converge after {iterations} sweeps \
         (last relative changes z+ {last_rel_plus:.3e}, z- {last_rel_minus:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        last_rel_plus: f64,
        last_rel_minus: f64,
        contraction_ratios: Vec<f64>,
    },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("truncation error estimator is singular (R - 1/24 = {0:.3e})")]
    EstimatorSingular(f64),

    #[error("time adaptivity failed at t = {t}: {reason}")]
    AdaptivityFailure { t: f64, reason: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Stable snake_case name of the innermost variant.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Evaluation(_) => "evaluation",
            Error::LinearSolve(_) => "linear_solve",
            Error::NonConvergence { .. } => "non_convergence",
            Error::InsufficientHistory(_) => "insufficient_history",
            Error::EstimatorSingular(_) => "estimator_singular",
            Error::AdaptivityFailure { .. } => "adaptivity_failure",
            Error::Io(_) => "io",
            Error::Context { .. } => unreachable!("root strips context layers"),
        }
    }

    /// The innermost error below any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
