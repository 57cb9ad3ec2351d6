use thiserror::Error;

pub type Result<T> = std::result::Result<T, OcpError>;

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown patch `{0}`")]
    UnknownPatch(String),

    #[error("invalid boundary condition: {0}")]
    Boundary(String),

    #[error(
        "linear solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("time step failed: {0}")]
    Step(String),

    #[error("reference is identically zero: {0}")]
    ZeroReference(String),

    #[error("case has no target: {0}")]
    MissingTarget(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
