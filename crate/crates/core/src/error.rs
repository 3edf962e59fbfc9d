use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpFailure {
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl std::fmt::Display for LpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpFailure::Infeasible => write!(f, "infeasible"),
            LpFailure::Unbounded => write!(f, "unbounded"),
            LpFailure::IterationLimit => write!(f, "iteration limit reached"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid schedule set: {0}")]
    Schedules(String),
    #[error("schedule set has {0} maximal element(s); at least two are required")]
    TooFewMaximal(usize),
    #[error("invalid channel: {0}")]
    Channel(String),
    #[error("channel is not eps-majorizing for any eps > 0 (every column has a zero minimum)")]
    NotMajorizing,
    #[error("channel is uninformative (eps* = 1); C1 is undefined")]
    Uninformative,
    #[error("uninformative portion is not strictly positive: columns {0:?} have zero minimum")]
    ZeroColumnMinimum(Vec<usize>),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("chain is reducible; closed classes: {0:?}")]
    Reducible(Vec<Vec<usize>>),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("linear program {0}")]
    Lp(LpFailure),
    #[error("solver shortfall: {0}")]
    Shortfall(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<LpFailure> for Error {
    fn from(f: LpFailure) -> Self {
        Error::Lp(f)
    }
}
