//! Linear soft-margin SVM trained with Pegasos-style stochastic subgradient
//! steps on standardized features.

use super::{ModelError, Prediction, Result};
use crate::ingest::Label;
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Soft-margin penalty; the regularization weight is `1 / (C n)`.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, epochs: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Weights over standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Train-set mean and standard deviation per feature.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub trained: bool,
}

fn sign(label: Label) -> f64 {
    match label {
        Label::Control => -1.0,
        Label::Schizophrenia => 1.0,
    }
}

/// Fits `w, b` minimizing `lambda/2 (|w|^2 + b^2) + mean(hinge(y (w z + b)))`
/// with `lambda = 1 / (C n)` and step `1 / (lambda t)`. The bias is handled
/// as a weight on a constant feature, so it shrinks like the others; an
/// unshrunk bias under this step schedule is dominated by the first few
/// samples. Constant features get unit scale.
pub fn svm_train(features: &[Vec<f64>], labels: &[Label], params: &SvmParams) -> Result<SvmModel> {
    let n = features.len();
    if n == 0 || n != labels.len() {
        return Err(ModelError::Data(format!("{n} feature rows for {} labels", labels.len())));
    }
    if !labels.contains(&Label::Control) || !labels.contains(&Label::Schizophrenia) {
        return Err(ModelError::Data("SVM training needs both classes".into()));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(ModelError::Data("feature rows must share a non-zero length".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::Data("non-finite feature value".into()));
    }
    if !(params.c > 0.0 && params.c.is_finite()) || params.epochs == 0 {
        return Err(ModelError::Config("C must be positive and epochs non-zero".into()));
    }

    let mut mean = vec![0.0; dim];
    for f in features {
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; dim];
    for f in features {
        scale.iter_mut().zip(f).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m));
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();

    let lambda = 1.0 / (params.c * n as f64);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::derive(params.seed, 3);
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let y = sign(labels[i]);
            let margin = y * (w.iter().zip(&z[i]).map(|(a, b)| a * b).sum::<f64>() + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                w.iter_mut().zip(&z[i]).for_each(|(v, x)| *v += eta * y * x);
                b += eta * y;
            }
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(ModelError::Data("SVM weights became non-finite".into()));
    }
    Ok(SvmModel { weights: w, bias: b, c: params.c, mean, scale, trained: true })
}

impl SvmModel {
    pub fn margin(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(ModelError::Data(format!(
                "SVM expects {} features, got {}",
                self.weights.len(),
                features.len()
            )));
        }
        let s: f64 = features
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((v, m), sd), w)| w * (v - m) / sd)
            .sum();
        Ok(s + self.bias)
    }

    /// Positive margin means schizophrenia; a zero margin is a tie reported
    /// as control.
    pub fn predict(&self, features: &[f64]) -> Result<Prediction> {
        let m = self.margin(features)?;
        let label = if m > 0.0 { Label::Schizophrenia } else { Label::Control };
        Ok(Prediction { label, scores: vec![m], tie: m == 0.0 })
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[Label]) -> Result<f64> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(ModelError::Data("nothing to score".into()));
        }
        let mut correct = 0usize;
        for (f, y) in features.iter().zip(labels) {
            correct += usize::from(self.predict(f)?.label == *y);
        }
        Ok(correct as f64 / features.len() as f64)
    }
}
