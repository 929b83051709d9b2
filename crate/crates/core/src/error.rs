use thiserror::Error;

/// Errors raised by the construction, smoothing, assembly and verification stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("line {axis}={coordinate} lies on a breakpoint; the step function is undefined there")]
    UndefinedLine { axis: char, coordinate: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("capability error: {reason} (largest feasible n = {max_feasible_n})")]
    Capability { reason: String, max_feasible_n: usize },

    #[error("search did not terminate: {0}")]
    SearchExhausted(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
