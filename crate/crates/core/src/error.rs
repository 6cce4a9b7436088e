use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A user function returned NaN or an infinity.
    #[error("non-finite value while evaluating coordinate {coordinate}")]
    NonFinite { coordinate: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("singular Jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("singular matrix block `{block}` (condition estimate {condition:e})")]
    SingularBlock { block: &'static str, condition: f64 },

    #[error("Riccati breakdown: `{block}` is singular (condition estimate {condition:e})")]
    RiccatiBreakdown { block: &'static str, condition: f64 },

    #[error("affine space lost rank after propagation ({rank} < {expected})")]
    Degenerate { rank: usize, expected: usize },

    #[error("Lagrangian space is not transversal to the fiber (q-block condition {condition:e})")]
    Transversality { condition: f64 },

    #[error("state escaped the grid at stage {stage}, node {node}: {detail}")]
    Escape {
        stage: usize,
        node: usize,
        detail: String,
    },

    #[error("quadrature did not converge for {what} (20/40-point disagreement {disagreement:e})")]
    Precision { what: String, disagreement: f64 },

    #[error("non-convex stage cost: {0}")]
    NonConvex(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics, false for malformed input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self.root(), Error::Dimension(_) | Error::Invalid(_))
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, context: impl Into<String>) -> Result<T>;
    fn with_context<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.context(context))
    }

    fn with_context<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
