use thiserror::Error;

/// Errors raised by the library. Each variant maps to one failure class the
/// CLI turns into an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HetqError {
    #[error("config error: key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unstable system: {0}")]
    Unstable(String),

    #[error("empty estimation window: {0}")]
    EmptyWindow(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("no idleness on the estimation window")]
    NoIdleness,
}

impl HetqError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        HetqError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// True for errors that come from bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, HetqError::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, HetqError>;
