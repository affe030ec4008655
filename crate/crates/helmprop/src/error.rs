use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular operator: |pivot| = {magnitude:e} at row {row}")]
    Singular { row: usize, magnitude: f64 },
    #[error("grid layout: {0}")]
    Grid(String),
    #[error("non-finite coefficient at node ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("sibling iteration under block {block} (level {level}) failed after {sweeps} sweeps: {reason}")]
    Stagnation {
        level: usize,
        block: String,
        sweeps: usize,
        reason: String,
    },
    #[error("block {block}: {source}")]
    Block {
        block: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_block(self, block: impl Into<String>) -> Self {
        Error::Block {
            block: block.into(),
            source: Box::new(self),
        }
    }
}
