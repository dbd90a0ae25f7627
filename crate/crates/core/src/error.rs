use thiserror::Error;

/// Errors raised by the simulator, the training stack and the data loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cutoff {0}: at least two Fock levels are required")]
    InvalidCutoff(usize),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("invalid target modes: {0}")]
    InvalidTarget(String),

    #[error("impossible outcome: probability {probability:e} is below 1e-14")]
    ImpossibleOutcome { probability: f64 },

    #[error("leakage budget exceeded: accumulated {accumulated:e} > budget {budget:e} ({context})")]
    Leakage {
        accumulated: f64,
        budget: f64,
        context: String,
    },

    #[error("repeat-until-success loop stalled after {loops} failed attempts")]
    Stall { loops: usize },

    #[error("the click branch of a threshold detector is a mixed state; use the Kraus operator")]
    MixedOutcome,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),

    #[error("degenerate target state: {0}")]
    DegenerateTarget(String),

    #[error("cutoff {cutoff} is insufficient: {reason}")]
    InsufficientCutoff { cutoff: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad IDX file: {0}")]
    Idx(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn in_layer(self, index: usize) -> Self {
        Error::Layer {
            index,
            source: Box::new(self),
        }
    }
}
