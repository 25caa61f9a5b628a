use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the search pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a register needs at least one qubit")]
    NoQubits,
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("CNOT control and target must differ (both are {0})")]
    ControlEqualsTarget(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid probability {value} for {what}; must lie in [0, 1]")]
    InvalidProbability { what: String, value: f64 },
    #[error("target state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("action index {index} out of range for {n_actions} actions")]
    ActionOutOfRange { index: usize, n_actions: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("replay memory holds {available} transitions, {requested} requested")]
    InsufficientTransitions { available: usize, requested: usize },
    #[error("network architecture mismatch: {0:?} vs {1:?}")]
    ArchitectureMismatch(Vec<usize>, Vec<usize>),
    #[error("cannot select from an empty weight vector")]
    EmptyWeights,
    #[error("unknown environment id {0}; expected 0..=5")]
    UnknownEnvironment(u32),
    #[error("malformed policy snapshot: {0}")]
    Snapshot(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("policy library not found at {0}")]
    MissingLibrary(PathBuf),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
