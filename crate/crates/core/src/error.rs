use thiserror::Error;

/// Errors produced by model construction, simulation, conversion and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer} ({kind}): expected input shape {expected:?}, got {found:?}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("layer {layer} has an activation but no threshold; convert the model first")]
    NotConverted { layer: usize },

    #[error("layer {layer} has an activation but no lambda")]
    MissingLambda { layer: usize },

    #[error("layer {layer} is not a spiking layer in this trace")]
    NotSpiking { layer: usize },

    #[error("models do not share an architecture: {0}")]
    ArchitectureMismatch(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
