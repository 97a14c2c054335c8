use super::conv::{ConvCache, PoolCache};
use super::dense::{DenseCache, DropoutCache};
use super::lstm::{LstmCache, GATE_F};
use super::{softmax_xent, Activation, Conv1d, Dense, Dropout, Lstm, LstmCell, MaxPool1d, NnError, Result, Tensor};
use crate::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Declarative description of one layer; a network is an input shape plus a
/// list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize, activation: Activation },
    MaxPool1d { size: usize, stride: usize },
    /// Consumes `[features, T]`; emits `[units, T]` or the final `[units]`.
    Lstm { units: usize, return_sequences: bool },
    Flatten,
    Dense { units: usize, activation: Activation },
    Dropout { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    /// Train the diagonal peephole terms; when off they stay at zero.
    pub peephole: bool,
    /// Initial bias of the LSTM forget gate.
    pub forget_bias: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions { peephole: true, forget_bias: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    Lstm(Lstm),
    Flatten,
    Dense(Dense),
    Dropout(Dropout),
}

#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Conv(ConvCache),
    Pool(PoolCache),
    Lstm(LstmCache),
    Flatten(Vec<usize>),
    Dense(DenseCache),
    Dropout(DropoutCache),
}

/// Dropout is active only in `Train`, which owns the mask generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

/// Sequential network. Its last layer may be a softmax dense layer, in which
/// case `forward` returns probabilities and the training path works on the
/// logits underneath.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    init: InitOptions,
    seed: u64,
    layers: Vec<Layer>,
}

/// Serialized network: architecture, init options, seed, optimizer step
/// count and every parameter tensor flattened in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub init: InitOptions,
    pub seed: u64,
    pub step: u64,
    pub params: Vec<Vec<f64>>,
}

const CHECKPOINT_FORMAT: &str = "eegsz-network/1";

fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape, values).expect("shape matches count")
}

impl Network {
    /// Output shape after each layer, or the first incompatibility.
    pub fn shape_chain(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
        let mut shape = input_shape.to_vec();
        if shape.is_empty() || shape.contains(&0) {
            return Err(NnError::Config(format!("invalid input shape {shape:?}")));
        }
        let mut chain = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let fail = |msg: String| NnError::Config(format!("layer {i} ({spec:?}): {msg}"));
            shape = match (spec, shape.as_slice()) {
                (LayerSpec::Conv1d { filters, kernel, .. }, &[_, t]) => {
                    if *filters == 0 || *kernel == 0 || t < *kernel {
                        return Err(fail(format!("input length {t} too short or empty layer")));
                    }
                    vec![*filters, t - kernel + 1]
                }
                (LayerSpec::MaxPool1d { size, stride }, &[c, t]) => {
                    let m = MaxPool1d { size: *size, stride: *stride }
                        .output_len(t)
                        .ok_or_else(|| fail(format!("input length {t} shorter than window")))?;
                    vec![c, m]
                }
                (LayerSpec::Lstm { units, return_sequences }, &[_, t]) => {
                    if *units == 0 {
                        return Err(fail("zero units".into()));
                    }
                    if *return_sequences {
                        vec![*units, t]
                    } else {
                        vec![*units]
                    }
                }
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (LayerSpec::Dense { units, activation }, &[_]) => {
                    if *units == 0 {
                        return Err(fail("zero units".into()));
                    }
                    if *activation == Activation::Softmax && i + 1 != specs.len() {
                        return Err(fail("softmax is only supported on the final layer".into()));
                    }
                    vec![*units]
                }
                (LayerSpec::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(fail(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    s.to_vec()
                }
                (_, s) => return Err(fail(format!("incompatible input shape {s:?}"))),
            };
            chain.push(shape.clone());
        }
        Ok(chain)
    }

    /// Builds a network with Glorot-uniform weights, zero biases, forget-gate
    /// bias `init.forget_bias` and zero peepholes.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], init: InitOptions, seed: u64) -> Result<Self> {
        let chain = Self::shape_chain(input_shape, specs)?;
        let mut rng = rng::derive(seed, 0x1417);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (spec, out_shape) in specs.iter().zip(&chain) {
            let layer = match *spec {
                LayerSpec::Conv1d { filters, kernel, activation } => {
                    let c = shape[0];
                    let w = glorot(&mut rng, &[filters, c, kernel], c * kernel, filters * kernel);
                    Layer::Conv1d(Conv1d::new(w, Tensor::zeros(&[filters]), activation)?)
                }
                LayerSpec::MaxPool1d { size, stride } => Layer::MaxPool1d(MaxPool1d { size, stride }),
                LayerSpec::Lstm { units, return_sequences } => {
                    let d = shape[0];
                    let mut cell = LstmCell::zeros(d, units);
                    cell.input_weights = glorot(&mut rng, &[4 * units, d], d, 4 * units);
                    cell.recurrent_weights = glorot(&mut rng, &[4 * units, units], units, 4 * units);
                    cell.bias.values_mut()[GATE_F * units..(GATE_F + 1) * units]
                        .iter_mut()
                        .for_each(|b| *b = init.forget_bias);
                    cell.use_peephole = init.peephole;
                    Layer::Lstm(Lstm { cell, return_sequences })
                }
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units, activation } => {
                    let n = shape[0];
                    let w = glorot(&mut rng, &[units, n], n, units);
                    Layer::Dense(Dense::new(w, Tensor::zeros(&[units]), activation)?)
                }
                LayerSpec::Dropout { rate } => Layer::Dropout(Dropout { rate }),
            };
            layers.push(layer);
            shape = out_shape.clone();
        }
        Ok(Network { input_shape: input_shape.to_vec(), specs: specs.to_vec(), init, seed, layers })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn init_options(&self) -> InitOptions {
        self.init
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(NnError::Shape(format!("network expects input {:?}, got {:?}", self.input_shape, x.shape())));
        }
        Ok(())
    }

    /// Output of the final layer (probabilities for a softmax head).
    pub fn forward(&self, x: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        let mut rng = match mode {
            Mode::Eval => None,
            Mode::Train(r) => Some(r),
        };
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Conv1d(l) => l.forward(&h)?,
                Layer::MaxPool1d(l) => l.forward(&h)?,
                Layer::Lstm(l) => l.forward(&h)?,
                Layer::Flatten => {
                    let n = h.len();
                    h.reshape(&[n])?
                }
                Layer::Dense(l) => l.forward(&h)?,
                Layer::Dropout(l) => l.forward(&h, rng.as_deref_mut()),
            };
        }
        Ok(h)
    }

    /// Forward pass keeping every layer's cache. A softmax head is evaluated
    /// without its activation, so the result is logits.
    pub(crate) fn forward_cached(&self, x: &Tensor, mut rng: Option<&mut Rng>) -> Result<(Tensor, Vec<Cache>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = match layer {
                Layer::Conv1d(l) => {
                    let (o, c) = l.forward_cached(&h)?;
                    (o, Cache::Conv(c))
                }
                Layer::MaxPool1d(l) => {
                    let (o, c) = l.forward_cached(&h)?;
                    (o, Cache::Pool(c))
                }
                Layer::Lstm(l) => {
                    let (o, c) = l.forward_cached(&h)?;
                    (o, Cache::Lstm(c))
                }
                Layer::Flatten => {
                    let shape = h.shape().to_vec();
                    let n = h.len();
                    (h.reshape(&[n])?, Cache::Flatten(shape))
                }
                Layer::Dense(l) => {
                    let act = if l.activation == Activation::Softmax { Activation::None } else { l.activation };
                    let (o, c) = l.forward_cached(&h, act)?;
                    (o, Cache::Dense(c))
                }
                Layer::Dropout(l) => {
                    let (o, c) = l.forward_cached(&h, rng.as_deref_mut());
                    (o, Cache::Dropout(c))
                }
            };
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    /// Backpropagates `dout` (gradient w.r.t. the `forward_cached` output),
    /// accumulating parameter gradients. Returns the input gradient.
    pub(crate) fn backward(&mut self, caches: &[Cache], dout: Tensor) -> Tensor {
        let mut g = dout;
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = match (layer, cache) {
                (Layer::Conv1d(l), Cache::Conv(c)) => l.backward(c, &g),
                (Layer::MaxPool1d(l), Cache::Pool(c)) => l.backward(c, &g),
                (Layer::Lstm(l), Cache::Lstm(c)) => l.backward(c, &g),
                (Layer::Flatten, Cache::Flatten(shape)) => g.reshape(shape).expect("flatten shape"),
                (Layer::Dense(l), Cache::Dense(c)) => l.backward(c, &g),
                (Layer::Dropout(l), Cache::Dropout(c)) => l.backward(c, &g),
                _ => unreachable!("cache does not match layer"),
            };
        }
        g
    }

    /// Cross-entropy loss of one example; accumulates parameter gradients
    /// and returns `(loss, input gradient)`. The last layer must have two or
    /// more outputs interpreted as logits.
    pub fn accumulate_gradients(&mut self, x: &Tensor, label: usize, mode: Mode<'_>) -> Result<(f64, Tensor)> {
        let rng = match mode {
            Mode::Eval => None,
            Mode::Train(r) => Some(r),
        };
        let (logits, caches) = self.forward_cached(x, rng)?;
        let (loss, grad) = softmax_xent(logits.values(), label)?;
        let dx = self.backward(&caches, Tensor::vector(grad));
        Ok((loss, dx))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv1d(l) => out.extend([&l.weights, &l.bias]),
                Layer::Lstm(l) => out.extend(l.cell.params()),
                Layer::Dense(l) => out.extend([&l.weights, &l.bias]),
                Layer::MaxPool1d(_) | Layer::Flatten | Layer::Dropout(_) => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(l) => out.extend([&mut l.weights, &mut l.bias]),
                Layer::Lstm(l) => out.extend(l.cell.params_mut()),
                Layer::Dense(l) => out.extend([&mut l.weights, &mut l.bias]),
                Layer::MaxPool1d(_) | Layer::Flatten | Layer::Dropout(_) => {}
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Number of trainable scalars. Peephole vectors count only when enabled.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for layer in &self.layers {
            match layer {
                Layer::Conv1d(l) => n += l.weights.len() + l.bias.len(),
                Layer::Lstm(l) => {
                    let c = &l.cell;
                    n += c.input_weights.len() + c.recurrent_weights.len() + c.bias.len();
                    if c.use_peephole {
                        n += c.peephole.len();
                    }
                }
                Layer::Dense(l) => n += l.weights.len() + l.bias.len(),
                Layer::MaxPool1d(_) | Layer::Flatten | Layer::Dropout(_) => {}
            }
        }
        n
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            input_shape: self.input_shape.clone(),
            layers: self.specs.clone(),
            init: self.init,
            seed: self.seed,
            step,
            params: self.params().into_iter().map(|p| p.values().to_vec()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        let mut net = Network::new(&ckpt.input_shape, &ckpt.layers, ckpt.init, ckpt.seed)?;
        let mut params = net.params_mut();
        if params.len() != ckpt.params.len() {
            return Err(NnError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                params.len(),
                ckpt.params.len()
            )));
        }
        for (i, (p, v)) in params.iter_mut().zip(&ckpt.params).enumerate() {
            if p.len() != v.len() {
                return Err(NnError::Checkpoint(format!("tensor {i} has {} values, expected {}", v.len(), p.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NnError::Checkpoint(format!("tensor {i} contains non-finite values")));
            }
            p.values_mut().copy_from_slice(v);
        }
        Ok(net)
    }
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
