use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("payoff o = {0} must be > 1 (with o <= 1 full reservation is optimal and training degenerates)")]
    PayoffTooSmall(f64),

    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },

    #[error("training loss became non-finite ({loss}) at epoch {epoch}, batch {batch}; increase pretrain epochs or o")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("training converged trivially: mean reservation {mean_reservation:.4} after epoch {epoch}; increase pretrain epochs or o")]
    TrivialCollapse { epoch: usize, mean_reservation: f64 },

    #[error("grid search over {m} outcomes is too large (at most 4 supported)")]
    GridTooLarge { m: usize },

    #[error("side information identity violated: gain {gain} vs mutual information {mutual_information}")]
    IdentityViolated { gain: f64, mutual_information: f64 },

    #[error("unknown selector `{0}` (expected gambler, entropy or softmax_response)")]
    UnknownSelector(String),

    #[error("{path}: unexpected magic 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the training dynamics rather than of the inputs.
    pub fn is_training_collapse(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } | Error::TrivialCollapse { .. }
        )
    }
}
