use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("register of {requested} qubits is outside the supported range 1..={max}")]
    Capacity { requested: usize, max: usize },

    #[error("amplitude vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("control and target must differ (both are qubit {0})")]
    SameQubit(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("gate is not unitary (deviation {0:e})")]
    NonUnitary(f64),

    #[error("subset of {0} qubits is too large for a reduced density matrix (max 12)")]
    SubsetTooLarge(usize),

    #[error("invalid control range {range} for {n_qubits} qubits (need 1 <= r < n)")]
    InvalidRange { range: usize, n_qubits: usize },

    #[error("parameter vector has length {found}, circuit expects {expected}")]
    ParamLength { expected: usize, found: usize },

    #[error("parameter index {index} out of range (circuit has {len} parameters)")]
    InvalidParamIndex { index: usize, len: usize },

    #[error("parameter {0} belongs to a compiled slot; derivatives exist only for G-parametrized gates")]
    UnsupportedDerivative(usize),

    #[error("controlled gate on target {target} is a pure global phase")]
    DegenerateGate { target: usize },

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} is not valid here: {reason}")]
    InvalidLabel { label: usize, reason: String },

    #[error("class {class} has {count} samples, fewer than the {folds} folds requested")]
    ClassTooSmall { class: usize, count: usize, folds: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
