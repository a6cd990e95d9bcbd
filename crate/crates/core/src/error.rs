use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported capability: {0}")]
    Capability(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}{}: {msg}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        msg: String,
    },

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Capability(_) => 1,
            _ => 2,
        }
    }
}
