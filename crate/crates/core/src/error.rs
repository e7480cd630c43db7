use thiserror::Error;

/// Errors raised anywhere in the homogenization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// Right-hand side is not in the range of the operator being inverted.
    #[error("solvability violated in {operator}: mean {mean:.3e} exceeds {tol:.1e}")]
    Solvability {
        operator: &'static str,
        mean: f64,
        tol: f64,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("point ({p}, {s}) is outside the positive cone of the kinetics")]
    OutsideDomain { p: f64, s: f64 },

    #[error("unknown kinetics model `{0}`")]
    UnknownModel(String),

    #[error("model `{0}` has no g0/g1 decomposition")]
    MissingDecomposition(String),

    #[error("equilibrium search converged to the boundary ({p}, {s})")]
    BoundaryEquilibrium { p: f64, s: f64 },

    #[error("positivity floor breached at t = {time}: min density {min:.3e}")]
    Positivity { time: f64, min: f64 },

    #[error("time step {dt:.3e} exceeds stability limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
