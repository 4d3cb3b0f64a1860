//! Minimal neural-network engine: tensors, the layers needed for a
//! convolutional + bidirectional-LSTM classifier, class-weighted losses,
//! reverse-mode gradients and Adam.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod network;
pub mod tensor;

pub use activation::{relu, sigmoid, softmax, tanh};
pub use adam::{adam_step, AdamState};
pub use conv::{conv1d_forward, maxpool1d};
pub use dense::dense_forward;
pub use loss::{weighted_cross_entropy, weighted_cross_entropy_with_logits, LossOutput};
pub use lstm::{bilstm_forward, lstm_step, LstmCellParams, LstmState};
pub use network::{glorot_uniform, GradientTape, Layer, Mode, Network};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum AutonetError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: expected a rank-{expected} tensor, got shape {got:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward called before a forward pass was recorded")]
    BackwardBeforeForward,
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = AutonetError> = std::result::Result<T, E>;
