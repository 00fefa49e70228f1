use thiserror::Error;

pub type Result<T> = std::result::Result<T, NonlocalError>;

#[derive(Debug, Error)]
pub enum NonlocalError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature for {what} did not reach tolerance (residual {residual:.3e})")]
    ToleranceNotMet { what: String, residual: f64 },

    #[error("quadrature failed on cell pair ({row}, {col}): residual {residual:.3e}")]
    CellPair { row: usize, col: usize, residual: f64 },

    #[error("subdomain with margin {margin} is empty")]
    EmptySubdomain { margin: f64 },

    #[error("operator is not positive definite (smallest eigenvalue estimate {smallest:.6e})")]
    Indefinite { smallest: f64 },

    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("weight graph is disconnected into {components} components")]
    Disconnected { components: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NonlocalError {
    pub fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}
