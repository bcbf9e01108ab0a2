use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical blow-up at t = {time:.6} s (step too large for the system stiffness?)")]
    NumericalBlowUp { time: f64 },

    #[error("road too short: run needs {needed:.3} m, road covers {available:.3} m")]
    RoadTooShort { needed: f64, available: f64 },

    #[error("rank-deficient regression (rank {rank} of {columns}): insufficient excitation")]
    RankDeficient { rank: usize, columns: usize },

    #[error("non-uniform sampling at sample {index}")]
    NonUniformSampling { index: usize },

    #[error("missing channel `{0}`")]
    MissingChannel(&'static str),

    #[error("empty profile: {0}")]
    EmptyProfile(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("misaligned profiles: {0}")]
    Misaligned(String),

    #[error("no segment within {max_distance:.1} m (nearest at {nearest:.1} m)")]
    NoSegmentNearby { nearest: f64, max_distance: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("unsupported map format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("not a map file")]
    BadMagic,

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("corrupt map file: {0}")]
    Corrupt(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NumericalBlowUp { .. } => "numerical_blow_up",
            Error::RoadTooShort { .. } => "road_too_short",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NonUniformSampling { .. } => "non_uniform_sampling",
            Error::MissingChannel(_) => "missing_channel",
            Error::EmptyProfile(_) => "empty_profile",
            Error::OutOfRange(_) => "out_of_range",
            Error::Misaligned(_) => "misaligned",
            Error::NoSegmentNearby { .. } => "no_match",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnsupportedVersion { .. } => "version_mismatch",
            Error::BadMagic => "bad_magic",
            Error::Checksum { .. } => "checksum",
            Error::Corrupt(_) => "corrupt",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
