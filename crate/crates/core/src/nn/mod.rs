//! Small fully connected networks whose last output is the reservation score.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use optim::{NonFiniteGradient, Sgd};
pub use train::{train, EpochLog, TrainConfig, Trained};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    None,
}

/// Layer widths from input to output. The output width is always `m + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activations,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input → hidden… → classes + 1`, with a linear output layer.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, activation: Activation) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(classes + 1);
        let mut acts = vec![activation; hidden.len()];
        acts.push(Activation::None);
        Self::new(sizes, acts)
    }

    /// 2-50-50-3 with tanh.
    pub fn synthetic() -> Self {
        Self::mlp(2, &[50, 50], 2, Activation::Tanh).expect("valid preset")
    }

    /// 784-256-128-11 with relu.
    pub fn mnist() -> Self {
        Self::mlp(784, &[256, 128], 10, Activation::Relu).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("model needs an input and an output size"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layers need {} activations, got {}",
                self.layer_sizes.len() - 1,
                self.layer_sizes.len() - 1,
                self.activations.len()
            )));
        }
        if self.m_plus_one() < 2 {
            return Err(Error::invalid("output must hold at least one class plus reservation"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn m_plus_one(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn classes(&self) -> usize {
        self.m_plus_one() - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    fn forward(&self, g: &mut Graph, x: Var) -> Result<(Var, Var, Var)> {
        let w = g.leaf(self.weight.clone());
        let b = g.leaf(self.bias.clone());
        let h = g.matmul_nt(x, w)?;
        let h = g.add_bias(h, b)?;
        let out = match self.activation {
            Activation::Tanh => g.tanh(h),
            Activation::Relu => g.relu(h),
            Activation::None => h,
        };
        Ok((out, w, b))
    }
}

/// Multilayer perceptron producing `m + 1` logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: ModelSpec,
    pub layers: Vec<DenseLayer>,
}

/// Glorot-uniform weights, zero biases; deterministic per seed.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Mlp> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layer_sizes
        .windows(2)
        .zip(&spec.activations)
        .map(|(w, &activation)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            DenseLayer {
                weight: Tensor::matrix(fan_out, fan_in, data).expect("layer shape"),
                bias: Tensor::zeros(&[fan_out]),
                activation,
            }
        })
        .collect();
    Ok(Mlp {
        spec: spec.clone(),
        layers,
    })
}

/// Rows used per graph when running inference over a whole dataset.
const INFERENCE_CHUNK: usize = 1024;

impl Mlp {
    /// Builds the forward pass; returns the logits and the parameter leaves
    /// in `[w0, b0, w1, b1, …]` order.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<(Var, Vec<Var>)> {
        let mut h = x;
        let mut params = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            let (out, w, b) = layer.forward(g, h)?;
            params.push(w);
            params.push(b);
            h = out;
        }
        Ok((h, params))
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Raw `n × (m+1)` logits for an `n × d` input.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let d = x.cols();
        if x.rank() != 2 || d != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "logits",
                left: x.shape().to_vec(),
                right: vec![self.spec.input_dim()],
            });
        }
        let width = self.spec.m_plus_one();
        let mut out = Vec::with_capacity(x.rows() * width);
        for chunk in x.data().chunks(INFERENCE_CHUNK * d) {
            let mut g = Graph::new();
            let xv = g.leaf(Tensor::matrix(chunk.len() / d, d, chunk.to_vec())?);
            let (z, _) = self.forward(&mut g, xv)?;
            out.extend_from_slice(g.value(z).data());
        }
        Tensor::matrix(x.rows(), width, out)
    }

    /// Softmax over all `m + 1` outputs.
    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(x)?))
    }
}

pub fn softmax_rows(z: &Tensor) -> Tensor {
    let c = z.cols();
    let mut out = Vec::with_capacity(z.len());
    for row in z.data().chunks_exact(c) {
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|v| (v - lse).exp()));
    }
    Tensor::new(z.shape().to_vec(), out).expect("same shape")
}

/// Argmax over the first `m` columns of each row (the reservation column is
/// never a prediction). Ties go to the lower index.
pub fn predict_classes(outputs: &Tensor) -> Vec<usize> {
    let c = outputs.cols();
    outputs
        .data()
        .chunks_exact(c)
        .map(|row| argmax(&row[..c - 1]))
        .collect()
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::synthetic();
        assert_eq!(init_params(&spec, 5).unwrap(), init_params(&spec, 5).unwrap());
        assert_ne!(init_params(&spec, 5).unwrap(), init_params(&spec, 6).unwrap());
    }

    #[test]
    fn init_biases_are_zero() {
        let model = init_params(&ModelSpec::mnist(), 1).unwrap();
        assert!(model.layers.iter().all(|l| l.bias.data().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_weights_respect_glorot_bound() {
        // 100 × 100 = 10k samples
        let spec = ModelSpec::new(vec![100, 100], vec![Activation::None]).unwrap();
        let model = init_params(&spec, 2).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        let w = model.layers[0].weight.data();
        assert_eq!(w.len(), 10_000);
        assert!(w.iter().all(|v| v.abs() <= bound));
        let (lo, hi) = w.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo < -0.95 * bound && hi > 0.95 * bound);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(vec![2], vec![]).is_err());
        assert!(ModelSpec::new(vec![2, 1], vec![Activation::None]).is_err());
        assert!(ModelSpec::new(vec![2, 3], vec![]).is_err());
        let s = ModelSpec::synthetic();
        assert_eq!((s.classes(), s.m_plus_one(), s.input_dim()), (2, 3, 2));
        assert_eq!(ModelSpec::mnist().layer_sizes, vec![784, 256, 128, 11]);
    }

    #[test]
    fn logits_shape_and_chunking() {
        let model = init_params(&ModelSpec::synthetic(), 3).unwrap();
        let n = 2 * INFERENCE_CHUNK + 5;
        let x = Tensor::matrix(n, 2, (0..2 * n).map(|i| (i as f64).sin()).collect()).unwrap();
        let z = model.logits(&x).unwrap();
        assert_eq!(z.shape(), &[n, 3]);
        let single = model
            .logits(&Tensor::matrix(1, 2, x.row(n - 1).to_vec()).unwrap())
            .unwrap();
        assert_eq!(single.row(0), z.row(n - 1));
        let p = softmax_rows(&z);
        for i in 0..n {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(model.logits(&Tensor::zeros(&[3, 4])).is_err());
    }

    #[test]
    fn predictions_skip_reservation() {
        let out = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.7, 0.5, 0.4, 0.1]).unwrap();
        assert_eq!(predict_classes(&out), vec![1, 0]);
    }
}
