use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{xavier_init, DenseMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected network `H_l = f(W_lᵀ H_{l-1} + b_l)`.
///
/// Hidden layers always use ReLU; `output` selects the activation of the
/// final layer. Weight `l` has shape `layer_sizes[l] x layer_sizes[l + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    output: Activation,
}

/// Per-layer activations from a forward pass; `activations[0]` is the input.
#[derive(Clone, Debug)]
pub struct MlpCache {
    activations: Vec<DenseMatrix>,
}

impl MlpCache {
    pub fn output(&self) -> &DenseMatrix {
        self.activations
            .last()
            .expect("cache holds the input at least")
    }

    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.activations[l]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    /// Gradient with respect to the input batch, when requested.
    pub input: Option<DenseMatrix>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            weights: mlp
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: None,
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            super::axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            super::axpy(1.0, b, a);
        }
    }

    /// Parameter gradients in the order of [`Mlp::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        assert!(layer_sizes.len() >= 2, "an MLP needs at least one layer");
        let weights = layer_sizes
            .windows(2)
            .map(|w| xavier_init(w[0], w[1], rng))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output,
        }
    }

    pub fn from_parts(
        weights: Vec<DenseMatrix>,
        biases: Vec<Vec<f64>>,
        output: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *layer_sizes.last().unwrap() || w.cols() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l}: weight {}x{} does not chain (bias {})",
                    w.rows(),
                    w.cols(),
                    b.len()
                )));
            }
            layer_sizes.push(w.cols());
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
            output,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    /// Mutable parameter buffers, ordered `W_1, b_1, W_2, b_2, ...`.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output
        } else {
            Activation::Relu
        }
    }

    /// Forward pass over a batch (one example per row).
    pub fn forward_batch(&self, input: DenseMatrix) -> Result<MlpCache> {
        if input.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "MLP expects input width {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(input);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut h = activations[l].matmul(w);
            let relu = self.activation(l) == Activation::Relu;
            for r in 0..h.rows() {
                for (v, bias) in h.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                    if relu && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(h);
        }
        Ok(MlpCache { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let cache = self.forward_batch(DenseMatrix::from_vec(1, input.len(), input.to_vec()))?;
        Ok((cache.output().row(0).to_vec(), cache))
    }

    /// Backpropagates `grad_output` (same shape as the cached output).
    /// The ReLU subgradient at zero is zero.
    pub fn backward_batch(
        &self,
        cache: &MlpCache,
        grad_output: &DenseMatrix,
        want_input_grad: bool,
    ) -> Result<MlpGrads> {
        if cache.activations.len() != self.weights.len() + 1
            || grad_output.shape() != cache.output().shape()
        {
            return Err(Error::DimensionMismatch(format!(
                "gradient of shape {:?} for output of shape {:?}",
                grad_output.shape(),
                cache.output().shape()
            )));
        }
        let n_layers = self.weights.len();
        let mut grad_w = Vec::with_capacity(n_layers);
        let mut grad_b = Vec::with_capacity(n_layers);
        let mut delta = grad_output.clone();
        let mut input_grad = None;
        for l in (0..n_layers).rev() {
            if self.activation(l) == Activation::Relu {
                let post = &cache.activations[l + 1];
                for (d, &h) in delta.as_mut_slice().iter_mut().zip(post.as_slice()) {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grad_w.push(cache.activations[l].t_matmul(&delta));
            let mut db = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                super::axpy(1.0, delta.row(r), &mut db);
            }
            grad_b.push(db);
            if l > 0 {
                delta = delta.matmul_t(&self.weights[l]);
            } else if want_input_grad {
                input_grad = Some(delta.matmul_t(&self.weights[0]));
            }
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok(MlpGrads {
            weights: grad_w,
            biases: grad_b,
            input: input_grad,
        })
    }

    /// Single-example backward; always returns the input gradient.
    pub fn backward(&self, cache: &MlpCache, grad_output: &[f64]) -> Result<MlpGrads> {
        let g = DenseMatrix::from_vec(1, grad_output.len(), grad_output.to_vec());
        self.backward_batch(cache, &g, true)
    }
}
