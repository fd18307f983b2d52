use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("a state needs at least one mode")]
    ZeroModes,
    #[error("squeezing must be non-negative, got {0} dB on mode {1}")]
    NegativeSqueezing(f64, usize),
    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeOutOfRange { index: usize, n_modes: usize },
    #[error("two-mode gate needs distinct modes, got {0} twice")]
    SameMode(usize),
    #[error("parameter must be finite: {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate conditioning on mode {mode}: variance {variance:e}, forced outcome {outcome} vs mean {mean}")]
    DegenerateConditioning {
        mode: usize,
        variance: f64,
        outcome: f64,
        mean: f64,
    },
    #[error("mode {0} appears with both x and p; conjugate quadratures cannot be read out together")]
    ConjugatePair(usize),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("forms {0} and {1} do not commute")]
    NonCommuting(usize, usize),
    #[error("form is not in the span of the nullifier set (residual {0:e})")]
    NotInSpan(f64),
    #[error("operator is not a closed loop: it fails to commute with nullifier {0}")]
    NotALoop(usize),
    #[error("cannot fuse an e-type charge with an m-type charge")]
    CrossSpecies,
    #[error("string is not path-connected between positions {0} and {1}")]
    DisconnectedPath(usize, usize),
    #[error("invalid {kind} id {id}")]
    InvalidId { kind: &'static str, id: usize },
    #[error("unsupported lattice: {0}")]
    UnsupportedLattice(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("serialization: {0}")]
    Serde(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
