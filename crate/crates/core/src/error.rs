use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ensemble parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A node count or edge count does not fit the machine integer used for graph storage.
    #[error("exact arithmetic capacity exceeded: {0}")]
    Capacity(String),

    #[error(
        "construction targets infeasible: {reason} (nearest achievable: L={l}, M={m}, length={length}, rate={rate:.4})"
    )]
    Infeasible {
        reason: String,
        l: u32,
        m: u64,
        length: u64,
        rate: f64,
    },

    #[error("girth conditioning failed: {remaining} short cycles remain after {attempts} swap attempts")]
    GirthConditioning { remaining: usize, attempts: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("integration did not converge at eps={eps}: {msg}; reduce the step size")]
    StepSize { eps: f64, msg: String },

    #[error("no local minimum of r1 found at eps={eps}")]
    NoLocalMinimum { eps: f64 },

    #[error("threshold bracket failure: {0}")]
    Bracket(String),

    #[error("missing required artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
