use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1} qubits")]
    Dimension(usize, usize),
    #[error("qubit index {index} out of range for {n} qubits")]
    Index { index: usize, n: usize },
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("observable must be Hermitian (phase +1 or -1), got {0}")]
    InvalidObservable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stabilizer {0} cannot be covered by any ancilla set")]
    Uncoverable(usize),
    #[error("horizon of {0} steps is too short for one full error-correction cycle")]
    Horizon(usize),
    #[error("stabilizer {0} has fewer than two measurements")]
    InsufficientHorizon(usize),
    #[error("detection event {0} has no path to any partner")]
    Disconnected(usize),
    #[error("retry cap of {0} attempts exceeded")]
    RetryCap(u64),
    #[error("undefined correlation: zero variance in {0}")]
    ZeroVariance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
