//! Error types shared across the crate.

/// Coarse classification used by the CLI to select exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent file contents.
    Format,
    /// Invalid arguments or numerical failures.
    Numerical,
    /// Operating-system I/O failures.
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:02x?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },

    #[error("unsupported {container} version {found} (expected {expected})")]
    VersionMismatch { container: &'static str, expected: u8, found: u8 },

    #[error("truncated input while reading {0}")]
    Truncated(&'static str),

    #[error("header checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    HeaderChecksum { stored: u32, computed: u32 },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("trailing bytes after end of payload")]
    TrailingData,

    #[error("tensor {name:?}: payload length {found} disagrees with shape ({expected} bytes)")]
    PayloadMismatch { name: String, expected: u64, found: u64 },

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),

    #[error("tensor {0:?} contains NaN or infinite values")]
    NonFinite(String),

    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    #[error("no tensor named {0:?} in archive")]
    MissingTensor(String),

    #[error("split axis {axis} out of range for rank-{rank} tensor")]
    SplitAxisOutOfRange { axis: usize, rank: usize },

    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("non-finite values in input to {0}")]
    NonFiniteInput(&'static str),

    #[error("SVD did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("rank {rank} out of range (must be in 1..={max})")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("kept singular value {index} is {value:.3e}, below threshold {threshold:.3e}; fit would be ill-conditioned")]
    IllConditioned { index: usize, value: f64, threshold: f64 },

    #[error("mixed ranks in modulation group: expected {expected}, found {found}")]
    MixedRanks { expected: usize, found: usize },

    #[error("quantization step must be positive and finite, got {0}")]
    NonPositiveStep(f64),

    #[error("value {value} overflows the symbol alphabet at step {step}")]
    SymbolOverflow { value: f64, step: f64 },

    #[error("symbol {0} absent from probability table and no escape configured")]
    UnknownSymbol(i32),

    #[error("cannot build a probability table from zero symbols")]
    EmptySymbols,

    #[error("invalid probability table: {0}")]
    InvalidPmf(String),

    #[error("symbol count mismatch: header says {expected}, group geometry implies {found}")]
    SymbolCountMismatch { expected: u64, found: u64 },

    #[error("step grid is empty")]
    EmptyGrid,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quality ranges of the two curves do not overlap")]
    NonOverlappingQuality,

    #[error("curve has {got} points; at least {need} required")]
    TooFewPoints { need: usize, got: usize },

    #[error("duplicate quality value {0} breaks the rate fit")]
    DuplicateQuality(f64),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Io(_) => ErrorClass::Io,
            BadMagic { .. }
            | VersionMismatch { .. }
            | Truncated(_)
            | HeaderChecksum { .. }
            | CorruptHeader(_)
            | TrailingData
            | PayloadMismatch { .. }
            | DuplicateName(_)
            | NonFinite(_)
            | InvalidPmf(_)
            | SymbolCountMismatch { .. }
            | Json(_) => ErrorClass::Format,
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
