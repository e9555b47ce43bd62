use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max entry residual {residual:e} exceeds {tolerance:e}")]
    NotHermitian { residual: f64, tolerance: f64 },

    #[error("eigensolver failed to converge{}", match .step { Some(j) => format!(" at step {j}"), None => String::new() })]
    EigenSolver { step: Option<usize> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown control model '{0}'")]
    UnknownModel(String),

    #[error("memory budget exceeded: configuration needs {needed} bytes, budget is {budget} bytes")]
    MemoryBudget { needed: u64, budget: u64 },

    #[error("non-finite cost at iteration {iteration}")]
    NonFiniteCost { iteration: usize },

    #[error("evaluation failed at iteration {iteration}: {source}")]
    Evaluation {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach a time-step index to an eigensolver failure.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::EigenSolver { .. } => Error::EigenSolver { step: Some(step) },
            other => other,
        }
    }
}
