use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid action distribution: {0}")]
    InvalidDistribution(String),

    /// Malformed expression or input file, with the field or position it came from.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    /// The game or network is well formed syntactically but violates a model invariant.
    #[error("model error: {0}")]
    Model(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// An iterative solver hit its iteration cap. Carries the best iterate for diagnosis.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
        history: Vec<f64>,
    },

    #[error("linear program failed: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
