use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants are grouped by how a batch front end
/// should report them: configuration/input problems, resource caps, and
/// internal invariant violations (which should abort loudly).
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dense block of dimension {dim} exceeds the solver cap {max}")]
    BlockTooLarge { dim: usize, max: usize },

    #[error("walk moment m={m} exceeds the cap {max}")]
    MomentTooLarge { m: usize, max: usize },

    #[error("shape size {requested} exceeds the enumeration cap {cap}")]
    ShapeCapExceeded { requested: usize, cap: usize },

    #[error("non-finite matrix entry at ({row},{col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("empty box interior after applying buffer {buffer}")]
    EmptyInterior { buffer: usize },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code a CLI should use for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::UnknownPreset(_)
            | Error::InvalidGraph(_)
            | Error::InvalidKernel(_)
            | Error::InvalidPerturbation(_)
            | Error::InvalidParameter(_)
            | Error::EmptyInterior { .. }
            | Error::Parse { .. } => 2,
            Error::BlockTooLarge { .. }
            | Error::MomentTooLarge { .. }
            | Error::ShapeCapExceeded { .. } => 3,
            Error::Invariant(_) | Error::NonFiniteEntry { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}
