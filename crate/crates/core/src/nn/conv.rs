//! Valid-padding, stride-1 1-D convolution over all input channels, and
//! 1-D max pooling.

use super::tensor::{axpy, dot};
use super::{Activation, NnError, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[filters, in_channels, kernel_len]`
    pub weights: Tensor,
    /// `[filters]`
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    input: Tensor,
    output: Tensor,
}

impl Conv1d {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 3 || bias.shape() != [weights.shape()[0]] {
            return Err(NnError::Shape(format!(
                "conv weights {:?} / bias {:?} inconsistent",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Conv1d { weights, bias, activation })
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_len(&self) -> usize {
        self.weights.shape()[2]
    }

    /// `out[f][t] = act(bias[f] + sum_{c,k} w[f][c][k] * x[c][t + k])`,
    /// output `[filters, T - kernel_len + 1]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (c_in, t_in) = match x.shape() {
            [c, t] => (*c, *t),
            s => return Err(NnError::Shape(format!("conv input must be 2-D, got {s:?}"))),
        };
        let (f_n, k_n) = (self.filters(), self.kernel_len());
        if c_in != self.in_channels() {
            return Err(NnError::Shape(format!("conv expects {} channels, got {c_in}", self.in_channels())));
        }
        if t_in < k_n {
            return Err(NnError::Shape(format!("conv input length {t_in} shorter than kernel {k_n}")));
        }
        let m = t_in - k_n + 1;
        let mut out = vec![0.0; f_n * m];
        let w = self.weights.values();
        for f in 0..f_n {
            let row = &mut out[f * m..(f + 1) * m];
            row.iter_mut().for_each(|v| *v = self.bias.values()[f]);
            for c in 0..c_in {
                let xc = x.row(c);
                for k in 0..k_n {
                    axpy(row, w[(f * c_in + c) * k_n + k], &xc[k..k + m]);
                }
            }
            self.activation.apply(row);
        }
        Tensor::new(&[f_n, m], out)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let out = self.forward(x)?;
        Ok((out.clone(), ConvCache { input: x.clone(), output: out }))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(&mut self, cache: &ConvCache, dout: &Tensor) -> Tensor {
        let (c_in, t_in) = (cache.input.shape()[0], cache.input.shape()[1]);
        let (f_n, k_n) = (self.filters(), self.kernel_len());
        let m = t_in - k_n + 1;
        let mut delta = dout.values().to_vec();
        self.activation.backprop(cache.output.values(), &mut delta);

        let mut dx = vec![0.0; c_in * t_in];
        let w = self.weights.values().to_vec();
        {
            let dw = self.weights.grad_mut();
            for f in 0..f_n {
                let d = &delta[f * m..(f + 1) * m];
                for c in 0..c_in {
                    let xc = cache.input.row(c);
                    for k in 0..k_n {
                        dw[(f * c_in + c) * k_n + k] += dot(d, &xc[k..k + m]);
                    }
                }
            }
        }
        {
            let db = self.bias.grad_mut();
            for f in 0..f_n {
                db[f] += delta[f * m..(f + 1) * m].iter().sum::<f64>();
            }
        }
        for f in 0..f_n {
            let d = &delta[f * m..(f + 1) * m];
            for c in 0..c_in {
                let dxc = &mut dx[c * t_in..(c + 1) * t_in];
                for k in 0..k_n {
                    axpy(&mut dxc[k..k + m], w[(f * c_in + c) * k_n + k], d);
                }
            }
        }
        Tensor::new(&[c_in, t_in], dx).expect("input gradient shape")
    }
}

/// Max pooling along time, per channel. Output length
/// `(T - size) / stride + 1`; a trailing remainder is dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPool1d {
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct PoolCache {
    in_shape: [usize; 2],
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn output_len(&self, t: usize) -> Option<usize> {
        (t >= self.size && self.size > 0 && self.stride > 0).then(|| (t - self.size) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_cached(x).map(|(t, _)| t)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        let (c_n, t_n) = match x.shape() {
            [c, t] => (*c, *t),
            s => return Err(NnError::Shape(format!("pool input must be 2-D, got {s:?}"))),
        };
        let m = self
            .output_len(t_n)
            .ok_or_else(|| NnError::Shape(format!("pool input length {t_n} shorter than window {}", self.size)))?;
        let mut out = Vec::with_capacity(c_n * m);
        let mut argmax = Vec::with_capacity(c_n * m);
        for c in 0..c_n {
            let row = x.row(c);
            for t in 0..m {
                let start = t * self.stride;
                // first index wins ties
                let mut best = start;
                for i in start + 1..start + self.size {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                out.push(row[best]);
                argmax.push(c * t_n + best);
            }
        }
        Ok((Tensor::new(&[c_n, m], out)?, PoolCache { in_shape: [c_n, t_n], argmax }))
    }

    pub(crate) fn backward(&self, cache: &PoolCache, dout: &Tensor) -> Tensor {
        let mut dx = vec![0.0; cache.in_shape[0] * cache.in_shape[1]];
        for (&i, &g) in cache.argmax.iter().zip(dout.values()) {
            dx[i] += g;
        }
        Tensor::new(&cache.in_shape, dx).expect("input gradient shape")
    }
}
