use super::{ModelConfig, ModelError, Result};
use crate::ingest::{Label, Segment};
use crate::nn::{softmax_xent, InitOptions, Mode, Network, Tensor, TrainState};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub seed: u64,
    pub init: InitOptions,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { epochs: 100, batch_size: 32, learning_rate: 1e-4, decay: 1e-4, seed: 0, init: InitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode (dropout on) forward passes of the epoch.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub params: TrainParams,
    pub log: Vec<EpochLog>,
    /// Optimizer updates applied.
    pub steps: u64,
}

impl TrainRun {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.train_loss).collect()
    }
}

/// Segment data as a `[channels, samples]` tensor.
pub fn segment_tensor(seg: &Segment) -> Tensor {
    Tensor::from_rows(&seg.data).expect("segment rows have equal length")
}

/// Outcome of classifying one input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: Label,
    /// Class probabilities for networks, `[margin]` for the SVM.
    pub scores: Vec<f64>,
    /// The two classes scored exactly equal; the label falls back to control.
    pub tie: bool,
}

impl Prediction {
    pub(crate) fn from_probabilities(p: Vec<f64>) -> Self {
        let tie = p[0] == p[1];
        let label = if p[1] > p[0] { Label::Schizophrenia } else { Label::Control };
        Prediction { label, scores: p, tie }
    }
}

/// Eval-mode (dropout off) class prediction.
pub fn predict(net: &Network, x: &Tensor) -> Result<Prediction> {
    let p = net.forward(x, Mode::Eval)?;
    if p.len() != 2 {
        return Err(ModelError::Config(format!("expected 2 outputs, got {}", p.len())));
    }
    Ok(Prediction::from_probabilities(p.into_values()))
}

/// Fraction of examples predicted correctly in eval mode.
pub fn accuracy(net: &Network, examples: &[(&Tensor, Label)]) -> Result<f64> {
    if examples.is_empty() {
        return Err(ModelError::Data("no examples to score".into()));
    }
    let mut correct = 0usize;
    for (x, y) in examples {
        if predict(net, x)?.label == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

fn argmax2(v: &[f64]) -> usize {
    usize::from(v[1] > v[0])
}

/// Mini-batch training with seeded shuffling, softmax cross-entropy and Adam.
/// Gradients are averaged over each batch in a fixed order. `val` is scored
/// after every epoch when non-empty.
pub fn train(
    config: &ModelConfig,
    train_set: &[(&Tensor, Label)],
    val: &[(&Tensor, Label)],
    params: &TrainParams,
) -> Result<(Network, TrainRun)> {
    if train_set.is_empty() {
        return Err(ModelError::Data("empty training set".into()));
    }
    if !train_set.iter().any(|e| e.1 == Label::Control) || !train_set.iter().any(|e| e.1 == Label::Schizophrenia) {
        return Err(ModelError::Data("training set must contain both classes".into()));
    }
    if params.batch_size == 0 || params.epochs == 0 {
        return Err(ModelError::Config("epochs and batch size must be positive".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) || !(params.decay >= 0.0) {
        return Err(ModelError::Config("learning rate must be positive and decay non-negative".into()));
    }
    let mut net = config.build_network(params.init, params.seed)?;
    let mut optimizer = TrainState::new(&net.params(), params.learning_rate, params.decay);
    let mut shuffle_rng = rng::derive(params.seed, 1);
    let mut dropout_rng = rng::derive(params.seed, 2);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(params.epochs);

    for epoch in 1..=params.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(params.batch_size) {
            net.zero_grad();
            for &i in batch {
                let (x, y) = train_set[i];
                let (logits, caches) = net.forward_cached(x, Some(&mut dropout_rng))?;
                let (loss, grad) = softmax_xent(logits.values(), y.index())?;
                if !loss.is_finite() {
                    return Err(ModelError::Divergence { epoch });
                }
                loss_sum += loss;
                correct += usize::from(argmax2(logits.values()) == y.index());
                net.backward(&caches, Tensor::vector(grad));
            }
            let scale = 1.0 / batch.len() as f64;
            for p in net.params_mut() {
                p.grad_mut().iter_mut().for_each(|v| *v *= scale);
            }
            optimizer.apply(&mut net.params_mut())?;
        }
        let n = train_set.len() as f64;
        let val_acc = if val.is_empty() { None } else { Some(accuracy(&net, val)?) };
        let entry = EpochLog { epoch, train_loss: loss_sum / n, train_acc: correct as f64 / n, val_acc };
        log::debug!(
            "epoch {epoch}: loss {:.5} train acc {:.4} val acc {:?}",
            entry.train_loss,
            entry.train_acc,
            entry.val_acc
        );
        log.push(entry);
    }
    Ok((net, TrainRun { params: *params, log, steps: optimizer.step }))
}

/// CSV with header `epoch,train_loss,train_acc,val_acc`; a missing
/// validation accuracy is an empty field.
pub fn write_training_log<W: Write>(out: W, run: &TrainRun) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "train_acc", "val_acc"])?;
    for e in &run.log {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.train_acc.to_string(),
            e.val_acc.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
