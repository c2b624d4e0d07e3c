use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("unsupported shape for this operation: {0}")]
    UnsupportedShape(String),

    #[error("grid misalignment: {msg} (smallest valid spacing: {suggested_h})")]
    Misaligned { msg: String, suggested_h: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("interface face between {0} and {1} has no transmission rule")]
    MissingRule(&'static str, &'static str),

    #[error("nonzero velocity sampled on a non-fluid cell at {0:?}")]
    VelocityOnSolid(Vec<f64>),

    #[error("linear solver did not converge after {iterations} iterations (residual history tail {history:?})")]
    SolverDiverged { iterations: usize, history: Vec<f64> },

    #[error("right-hand side incompatible with singular system (mean {mean:e})")]
    IncompatibleRhs { mean: f64 },

    #[error("grid mismatch: expected {expected} values, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("ill-posed interface sink: coefficient {0} is negative")]
    NegativeSink(f64),

    #[error("inside region of a connected shape is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("coupling iteration did not converge in {iterations} iterations (E history tail {history:?})")]
    CouplingDiverged { iterations: usize, history: Vec<f64> },

    #[error("profile offset {offset} outside domain [{lo}, {hi}]")]
    OffsetOutside { offset: f64, lo: f64, hi: f64 },

    #[error("malformed field dump: {0}")]
    BadDump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that come from a numerical solve rather than from input validation.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SolverDiverged { .. } | Error::CouplingDiverged { .. } | Error::IncompatibleRhs { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
