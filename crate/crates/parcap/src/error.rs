use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver failed to converge after {iterations} iterations (residual {residual:.3e}): {context}")]
    Solver {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("solver failed at time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("missing prerequisite artifact: {missing} (produced by {producer})")]
    Dependency { missing: String, producer: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
