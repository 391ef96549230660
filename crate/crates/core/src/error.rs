use thiserror::Error;

/// Errors raised by the models, solvers and identification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("phase fraction {0} outside [0, 1]")]
    PhaseFraction(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("phase fraction {x} outside admissible range [{lo}, {hi}] of loop {level}")]
    OutOfRange { x: f64, lo: f64, hi: f64, level: usize },

    #[error("degenerate reversal at x_M = {x}: no room for a minor loop in [{lo}, {hi}]")]
    DegenerateReversal { x: f64, lo: f64, hi: f64 },

    #[error("cannot close loop {level}: closure needs at least 3 nested loops")]
    MemoryUnderflow { level: usize },

    #[error("no phase-fraction root for mode {mode} in [{lo}, {hi}]")]
    NoRoot { mode: String, lo: f64, hi: f64 },

    #[error("multiple phase-fraction roots for mode {mode}: brackets at x_M = {first} and {second}")]
    MultipleRoots { mode: String, first: f64, second: f64 },

    #[error("singular phase-rate denominator ({0:e}) in mode {1}")]
    SingularDenominator(f64, String),

    #[error("inconsistent jump: {0}")]
    InconsistentJump(String),

    #[error("Zeno behaviour at t = {t}: more than {limit} chained jumps ({log})")]
    Zeno { t: f64, limit: usize, log: String },

    #[error("solver failure at t = {t}: {reason}")]
    SolverFailure { t: f64, reason: String },

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("rank-deficient regression (rank {rank} of {cols}): {reason}")]
    RankDeficient { rank: usize, cols: usize, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
