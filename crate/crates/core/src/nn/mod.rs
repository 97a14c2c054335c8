//! Small tensor engine with hand-written backpropagation for 1-D
//! convolution, max pooling, peephole LSTM, dense and dropout layers.

mod conv;
mod dense;
mod gradcheck;
mod lstm;
mod network;
mod optim;
mod tensor;

pub use conv::{Conv1d, MaxPool1d};
pub use dense::{Dense, Dropout};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use lstm::{Lstm, LstmCell, LstmGates, LstmState};
pub use network::{Checkpoint, InitOptions, Layer, LayerSpec, Mode, Network};
pub use optim::{softmax, softmax_xent, TrainState};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        match self {
            Activation::None => {}
            Activation::Relu => x.iter_mut().for_each(|v| {
                // NaN passes through so divergence stays visible
                if *v < 0.0 {
                    *v = 0.0;
                }
            }),
            Activation::Softmax => {
                let p = softmax(x);
                x.copy_from_slice(&p);
            }
        }
    }

    /// Turns a gradient with respect to the activation output into one with
    /// respect to its input, given the output values.
    pub fn backprop(self, output: &[f64], delta: &mut [f64]) {
        match self {
            Activation::None => {}
            Activation::Relu => {
                for (d, &y) in delta.iter_mut().zip(output) {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            Activation::Softmax => {
                let s: f64 = delta.iter().zip(output).map(|(d, y)| d * y).sum();
                for (d, &y) in delta.iter_mut().zip(output) {
                    *d = y * (*d - s);
                }
            }
        }
    }
}
