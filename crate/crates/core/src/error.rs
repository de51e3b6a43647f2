use thiserror::Error;

/// Errors raised across the lab. Variants are grouped by the module that
/// produces them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    Dimension(usize),
    #[error("exponent beta = {0} outside the open interval (0, 2)")]
    BetaOutOfRange(f64),
    #[error("window {window} exceeds torus half-side for {sites} sites (need sites >= 2*window + 2)")]
    WindowTooLarge { window: usize, sites: usize },
    #[error("torus side {0} must be even and at least 2")]
    TorusSide(usize),
    #[error("custom kernel table is not symmetric at displacement {0:?}")]
    NonSymmetricKernel(Vec<i64>),
    #[error("invalid kernel table: {0}")]
    KernelTable(String),
    #[error("grid mismatch: expected {expected} sites, found {found}")]
    GridMismatch { expected: usize, found: usize },
    #[error("time-stamp mismatch: {0} vs {1}")]
    TimeMismatch(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative profile value {0}")]
    NegativeProfile(f64),
    #[error("configuration has no particles")]
    NoParticles,
    #[error("dual configuration holds {0} walkers (at most 4 supported)")]
    TooManyWalkers(usize),
    #[error("state space of {0} states exceeds the exact-model limit")]
    StateSpaceTooLarge(usize),
    #[error("uniformization did not reach tail mass {tol:e} within {terms} terms")]
    Truncation { tol: f64, terms: usize },
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("density path does not cover [0, {0}]")]
    PathGap(f64),
    #[error("negative initial variance density {0}")]
    NegativeVariance(f64),
    #[error("symbol extrapolation unavailable for mode {0:?}")]
    SymbolUnavailable(Vec<i64>),
    #[error("convergence sweep needs at least {needed} ladder points, got {got}")]
    MissingLadder { needed: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("output collision: {0} exists (use --force)")]
    OutputCollision(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
