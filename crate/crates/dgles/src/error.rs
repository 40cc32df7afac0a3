use thiserror::Error;

/// Errors produced by mesh construction, the solver kernels and the run driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate element {element}: {reason}")]
    DegenerateElement { element: usize, reason: String },

    #[error("positivity violation in element {element}: {quantity} = {value:.6e}")]
    PositivityViolation {
        element: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("numerical blowup: non-finite residual in element {element}")]
    NumericalBlowup { element: usize },

    #[error("statistics not ready: {0}")]
    NotReady(String),

    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
