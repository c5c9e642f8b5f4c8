//! Multi-task recurrent tagger: word embeddings, one LSTM layer and two
//! feed-forward heads, one predicting the disfluency tag of the current
//! token and one predicting the next token.

pub mod forward;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod model;
pub mod params;
pub mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forward::{forward_sequence, forward_step, State, Step};
pub use gradcheck::{check_gradients, gradient_check, GradCheckReport};
pub use loss::{backward, batch_loss, loss, loss_and_gradients, Batch, LossComponents, Sequence};
pub use model::{Model, Prediction, SessionState};
pub use params::{init_params, Parameters};
pub use tensor::Scalar;

/// Architecture and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Filled in from the training vocabulary when left at 0.
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub head_layer_sizes: Vec<usize>,
    /// Truncated backpropagation length.
    pub context_window: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            vocab_size: 0,
            embedding_size: 128,
            hidden_size: 128,
            head_layer_sizes: vec![128],
            context_window: 20,
            alpha: 0.1,
            lambda: 0.001,
            gamma: 1.05,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidHyper(m));
        if self.vocab_size < 1 || self.embedding_size < 1 || self.hidden_size < 1 || self.context_window < 1 {
            return bad("vocab, embedding, hidden and window sizes must be at least 1".into());
        }
        if self.head_layer_sizes.contains(&0) {
            return bad("head layer sizes must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and positive, got {}", self.gamma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("non-finite activation at step {step}")]
    NonFinite { step: usize },
    #[error("token id {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("gold tag {tag} at step {step} has class weight 0")]
    ZeroWeightClass { tag: String, step: usize },
    #[error("session is closed")]
    SessionClosed,
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated: {0}")]
    Truncated(String),
    #[error("malformed model header: {0}")]
    Header(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
