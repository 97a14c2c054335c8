//! The hybrid CNN-LSTM, CNN-only and LSTM-only architectures, the linear SVM
//! baseline, and the training loop.

mod svm;
mod train;

pub use svm::{svm_train, SvmModel, SvmParams};
pub use train::{
    accuracy, predict, segment_tensor, train, write_training_log, EpochLog, Prediction, TrainParams, TrainRun,
};

use crate::dsp::DspError;
use crate::nn::{gradcheck, Activation, GradcheckReport, InitOptions, LayerSpec, Network, NnError, Tensor};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Szhnn,
    Cnn,
    Lstm,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Szhnn, ModelKind::Cnn, ModelKind::Lstm, ModelKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Szhnn => "szhnn",
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Svm => "svm",
        }
    }

    pub fn is_network(self) -> bool {
        self != ModelKind::Svm
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "szhnn" | "cnn-lstm" | "hybrid" => Ok(ModelKind::Szhnn),
            _ => ModelKind::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .ok_or_else(|| ModelError::Config(format!("unknown model {s:?}"))),
        }
    }
}

/// Convolution stages (filter count and kernel length per stage, each
/// followed by pooling) and LSTM width of the hybrid model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HybridParams {
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub lstm_units: usize,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams { filters: vec![5, 10], kernels: vec![15, 10], lstm_units: 32 }
    }
}

impl HybridParams {
    pub fn new(filters: &[usize], kernels: &[usize], lstm_units: usize) -> Self {
        HybridParams { filters: filters.to_vec(), kernels: kernels.to_vec(), lstm_units }
    }

    /// Compact label such as `f5-10_k15-10_u32`.
    pub fn tag(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        format!("f{}_k{}_u{}", join(&self.filters), join(&self.kernels), self.lstm_units)
    }

    /// The filter, kernel and LSTM-width variations explored for the hybrid
    /// model, in table order. The best configuration appears in every table,
    /// so the list has duplicates.
    pub fn search_grid() -> Vec<HybridParams> {
        vec![
            HybridParams::new(&[5], &[15], 32),
            HybridParams::new(&[5, 10], &[15, 10], 32),
            HybridParams::new(&[5, 10, 15], &[15, 10, 5], 32),
            HybridParams::new(&[5, 10], &[5, 10], 32),
            HybridParams::new(&[5, 10], &[10, 15], 32),
            HybridParams::new(&[5, 10], &[15, 20], 32),
            HybridParams::new(&[5, 10], &[15, 10], 32),
            HybridParams::new(&[5, 10], &[15, 10], 8),
            HybridParams::new(&[5, 10], &[15, 10], 16),
            HybridParams::new(&[5, 10], &[15, 10], 32),
        ]
    }
}

/// A network architecture bound to an input shape. For the SVM `layers` is
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelConfig {
    /// Output shape of each layer.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        Ok(Network::shape_chain(&self.input_shape, &self.layers)?)
    }

    pub fn build_network(&self, init: crate::nn::InitOptions, seed: u64) -> Result<Network> {
        if !self.kind.is_network() {
            return Err(ModelError::Config("the SVM has no network form".into()));
        }
        Ok(Network::new(&self.input_shape, &self.layers, init, seed)?)
    }
}

fn checked(kind: ModelKind, input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<ModelConfig> {
    if input_shape.len() != 2 {
        return Err(ModelError::Config(format!("{kind} expects a [channels, samples] input, got {input_shape:?}")));
    }
    let config = ModelConfig { kind, input_shape: input_shape.to_vec(), layers };
    config.shape_chain().map_err(|e| ModelError::Config(format!("{kind} on input {input_shape:?}: {e}")))?;
    Ok(config)
}

fn conv(filters: usize, kernel: usize) -> LayerSpec {
    LayerSpec::Conv1d { filters, kernel, activation: Activation::Relu }
}

const POOL: LayerSpec = LayerSpec::MaxPool1d { size: 2, stride: 2 };

fn dense(units: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense { units, activation }
}

/// Conv(5, 15) - pool - Conv(10, 10) - pool - LSTM(32) - Dense(64) -
/// Dropout(0.5) - Dense(2, softmax).
pub fn build_szhnn(input_shape: &[usize]) -> Result<ModelConfig> {
    build_hybrid(input_shape, &HybridParams::default())
}

pub fn build_hybrid(input_shape: &[usize], p: &HybridParams) -> Result<ModelConfig> {
    if p.filters.is_empty() || p.filters.len() != p.kernels.len() {
        return Err(ModelError::Config(format!(
            "need one kernel length per convolution stage, got filters {:?} and kernels {:?}",
            p.filters, p.kernels
        )));
    }
    let mut layers = Vec::new();
    for (&f, &k) in p.filters.iter().zip(&p.kernels) {
        layers.extend([conv(f, k), POOL]);
    }
    layers.extend([
        LayerSpec::Lstm { units: p.lstm_units, return_sequences: false },
        dense(64, Activation::Relu),
        LayerSpec::Dropout { rate: 0.5 },
        dense(2, Activation::Softmax),
    ]);
    checked(ModelKind::Szhnn, input_shape, layers)
}

/// Three conv/pool stages, flatten, Dense(64) + Dropout(0.5), Dense(32) +
/// Dropout(0.2), Dense(2, softmax).
pub fn build_cnn(input_shape: &[usize]) -> Result<ModelConfig> {
    checked(
        ModelKind::Cnn,
        input_shape,
        vec![
            conv(5, 15),
            POOL,
            conv(10, 10),
            POOL,
            conv(10, 10),
            POOL,
            LayerSpec::Flatten,
            dense(64, Activation::Relu),
            LayerSpec::Dropout { rate: 0.5 },
            dense(32, Activation::Relu),
            LayerSpec::Dropout { rate: 0.2 },
            dense(2, Activation::Softmax),
        ],
    )
}

/// LSTM(32, full sequence) - LSTM(64, final state) - Dense(32) +
/// Dropout(0.5) - Dense(2, softmax). The input is read as `samples` steps of
/// `channels`-dimensional vectors.
pub fn build_lstm(input_shape: &[usize]) -> Result<ModelConfig> {
    checked(
        ModelKind::Lstm,
        input_shape,
        vec![
            LayerSpec::Lstm { units: 32, return_sequences: true },
            LayerSpec::Lstm { units: 64, return_sequences: false },
            dense(32, Activation::Relu),
            LayerSpec::Dropout { rate: 0.5 },
            dense(2, Activation::Softmax),
        ],
    )
}

pub fn build(kind: ModelKind, input_shape: &[usize], hybrid: &HybridParams) -> Result<ModelConfig> {
    match kind {
        ModelKind::Szhnn => build_hybrid(input_shape, hybrid),
        ModelKind::Cnn => build_cnn(input_shape),
        ModelKind::Lstm => build_lstm(input_shape),
        ModelKind::Svm => Ok(ModelConfig { kind, input_shape: input_shape.to_vec(), layers: Vec::new() }),
    }
}

/// Finite-difference check of a tiny hybrid network (2 channels, 40
/// samples, default hyperparameters) at a random input, for both labels.
/// Zero-initialized parameters are nudged so their gradients are exercised.
/// Returns the worse of the two reports.
pub fn szhnn_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let config = build_szhnn(&[2, 40])?;
    let mut net = config.build_network(InitOptions::default(), seed)?;
    let mut rng = crate::rng::derive(seed, 0x6C);
    for p in net.params_mut() {
        p.values_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    let x = Tensor::new(&[2, 40], (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let mut worst: Option<GradcheckReport> = None;
    for label in 0..2 {
        let report = gradcheck(&mut net, &x, label, 1e-5)?;
        if worst.as_ref().map_or(true, |w| report.max_relative_error > w.max_relative_error) {
            worst = Some(report);
        }
    }
    Ok(worst.expect("two labels checked"))
}
