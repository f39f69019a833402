//! Dense numeric core: matrices, MLPs with manual backprop, BCE and Adam.

mod adam;
mod dense;
mod init;
mod loss;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use dense::{axpy, dot, DenseMatrix};
pub use init::{xavier_bound, xavier_init};
pub use loss::{bce_loss, clamp_prob, sigmoid, PROB_CLAMP};
pub use mlp::{Activation, Mlp, MlpCache, MlpGrads};

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
