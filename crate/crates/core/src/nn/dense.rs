use super::tensor::{axpy, dot};
use super::{Activation, NnError, Result, Tensor};
use crate::rng::Rng;
use rand::Rng as _;

/// Fully connected layer on a flat vector: `act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weights: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub(crate) struct DenseCache {
    input: Tensor,
    output: Tensor,
    activation: Activation,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.shape()[0]] {
            return Err(NnError::Shape(format!(
                "dense weights {:?} / bias {:?} inconsistent",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Dense { weights, bias, activation })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_as(x, self.activation)
    }

    fn forward_as(&self, x: &Tensor, activation: Activation) -> Result<Tensor> {
        let (out_n, in_n) = (self.weights.shape()[0], self.weights.shape()[1]);
        if x.len() != in_n {
            return Err(NnError::Shape(format!("dense expects {in_n} inputs, got {:?}", x.shape())));
        }
        let mut out: Vec<f64> =
            (0..out_n).map(|r| dot(self.weights.row(r), x.values()) + self.bias.values()[r]).collect();
        activation.apply(&mut out);
        Ok(Tensor::vector(out))
    }

    /// Forward pass under an explicit activation; the network uses this to
    /// emit logits from a softmax head.
    pub(crate) fn forward_cached(&self, x: &Tensor, activation: Activation) -> Result<(Tensor, DenseCache)> {
        let out = self.forward_as(x, activation)?;
        Ok((out.clone(), DenseCache { input: x.clone(), output: out, activation }))
    }

    pub(crate) fn backward(&mut self, cache: &DenseCache, dout: &Tensor) -> Tensor {
        let in_n = self.weights.shape()[1];
        let mut delta = dout.values().to_vec();
        cache.activation.backprop(cache.output.values(), &mut delta);
        let mut dx = vec![0.0; in_n];
        for (r, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                axpy(&mut dx, d, self.weights.row(r));
            }
        }
        let dw = self.weights.grad_mut();
        for (r, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                axpy(&mut dw[r * in_n..(r + 1) * in_n], d, cache.input.values());
            }
        }
        for (g, d) in self.bias.grad_mut().iter_mut().zip(&delta) {
            *g += d;
        }
        Tensor::new(cache.input.shape(), dx).expect("input gradient shape")
    }
}

/// Inverted dropout: in training, each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; identity otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DropoutCache {
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn forward(&self, x: &Tensor, rng: Option<&mut Rng>) -> Tensor {
        self.forward_cached(x, rng).0
    }

    pub(crate) fn forward_cached(&self, x: &Tensor, rng: Option<&mut Rng>) -> (Tensor, DropoutCache) {
        match rng {
            Some(rng) if self.rate > 0.0 => {
                let keep = 1.0 - self.rate;
                let mask: Vec<f64> =
                    (0..x.len()).map(|_| if rng.gen::<f64>() < self.rate { 0.0 } else { 1.0 / keep }).collect();
                let values = x.values().iter().zip(&mask).map(|(v, m)| v * m).collect();
                (Tensor::new(x.shape(), values).expect("same shape"), DropoutCache { mask: Some(mask) })
            }
            _ => (x.clone(), DropoutCache { mask: None }),
        }
    }

    pub(crate) fn backward(&self, cache: &DropoutCache, dout: &Tensor) -> Tensor {
        match &cache.mask {
            Some(mask) => {
                let values = dout.values().iter().zip(mask).map(|(v, m)| v * m).collect();
                Tensor::new(dout.shape(), values).expect("same shape")
            }
            None => dout.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let w = Tensor::new(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = Dense::new(w, Tensor::zeros(&[3]), Activation::None).unwrap();
        let x = Tensor::vector(vec![1.5, -2.0, 0.25]);
        assert_eq!(layer.forward(&x).unwrap().values(), x.values());
    }

    #[test]
    fn relu_clamps_negative() {
        let layer = Dense::new(Tensor::new(&[1, 1], vec![1.0]).unwrap(), Tensor::zeros(&[1]), Activation::Relu).unwrap();
        assert_eq!(layer.forward(&Tensor::vector(vec![-1.0])).unwrap().values(), &[0.0]);
    }

    #[test]
    fn random_case_matches_scalar_loop() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(17);
        let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let layer = Dense::new(Tensor::new(&[3, 4], w.clone()).unwrap(), Tensor::vector(b.clone()), Activation::Relu).unwrap();
        let got = layer.forward(&Tensor::vector(x.clone())).unwrap();
        for r in 0..3 {
            let mut s = b[r];
            for c in 0..4 {
                s += w[r * 4 + c] * x[c];
            }
            assert!((got.values()[r] - s.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn dropout_eval_and_zero_rate_are_identity() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(Dropout { rate: 0.5 }.forward(&x, None), x);
        let mut rng = crate::rng::seeded(1);
        assert_eq!(Dropout { rate: 0.0 }.forward(&x, Some(&mut rng)), x);
    }

    #[test]
    fn dropout_preserves_mean() {
        let mut rng = crate::rng::seeded(99);
        let x = Tensor::vector(vec![1.0; 100_000]);
        let y = Dropout { rate: 0.5 }.forward(&x, Some(&mut rng));
        let mean = y.values().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!(y.values().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
