//! Aspect fusion: learned attention, parameter-free self-attention, and
//! plain averaging. Each function works on the `L` aspect-level factors of a
//! single node; the batched model code calls the same primitives.

use crate::error::{Error, Result};
use crate::nn::{axpy, dot, softmax, DenseMatrix, Mlp};

fn check_factors<F: AsRef<[f64]>>(factors: &[F]) -> Result<usize> {
    let d = factors
        .first()
        .ok_or_else(|| Error::DimensionMismatch("fusion needs at least one factor".into()))?
        .as_ref()
        .len();
    if factors.iter().any(|f| f.as_ref().len() != d) {
        return Err(Error::DimensionMismatch(
            "aspect factors differ in length".into(),
        ));
    }
    Ok(d)
}

/// Softmax-weighted sum of `factors` given one raw score per aspect.
pub fn attention_combine<F: AsRef<[f64]>>(factors: &[F], scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(factors.len(), scores.len());
    let weights = softmax(scores);
    let mut fused = vec![0.0; factors[0].as_ref().len()];
    for (f, &w) in factors.iter().zip(&weights) {
        axpy(w, f.as_ref(), &mut fused);
    }
    (fused, weights)
}

/// Backward of [`attention_combine`]: the direct gradient on each factor and
/// the gradient on each raw score.
pub fn attention_combine_backward<F: AsRef<[f64]>>(
    factors: &[F],
    weights: &[f64],
    grad_fused: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let grad_factors = weights
        .iter()
        .map(|&w| grad_fused.iter().map(|g| w * g).collect())
        .collect();
    let grad_weights: Vec<f64> = factors
        .iter()
        .map(|f| dot(f.as_ref(), grad_fused))
        .collect();
    let mean: f64 = weights.iter().zip(&grad_weights).map(|(w, g)| w * g).sum();
    let grad_scores = weights
        .iter()
        .zip(&grad_weights)
        .map(|(w, g)| w * (g - mean))
        .collect();
    (grad_factors, grad_scores)
}

/// Scores every factor with the two-layer attention network, normalizes the
/// scores with a softmax and returns `(fused, weights)`.
pub fn attention_fuse<F: AsRef<[f64]>>(factors: &[F], net: &Mlp) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = check_factors(factors)?;
    let mut stacked = DenseMatrix::zeros(factors.len(), d);
    for (k, f) in factors.iter().enumerate() {
        stacked.row_mut(k).copy_from_slice(f.as_ref());
    }
    let cache = net.forward_batch(stacked)?;
    let scores: Vec<f64> = cache.output().as_slice().to_vec();
    Ok(attention_combine(factors, &scores))
}

/// Uniform-weight fusion; identical to attention with equal scores.
pub fn average_fuse<F: AsRef<[f64]>>(factors: &[F]) -> Result<Vec<f64>> {
    check_factors(factors)?;
    let scores = vec![0.0; factors.len()];
    Ok(attention_combine(factors, &scores).0)
}

/// Self-attention coefficients: row `b` holds the softmax over the inner
/// products `<u_b, u_c>` for `c != b`; the diagonal is exactly zero.
/// Also returns the raw affinity matrix.
pub fn self_attention_coefficients<F: AsRef<[f64]>>(factors: &[F]) -> (DenseMatrix, DenseMatrix) {
    let l = factors.len();
    let mut affinity = DenseMatrix::zeros(l, l);
    for b in 0..l {
        for c in b..l {
            let v = dot(factors[b].as_ref(), factors[c].as_ref());
            affinity[(b, c)] = v;
            affinity[(c, b)] = v;
        }
    }
    let mut coeffs = DenseMatrix::zeros(l, l);
    if l == 1 {
        coeffs[(0, 0)] = 1.0;
        return (coeffs, affinity);
    }
    for b in 0..l {
        let others: Vec<f64> = (0..l)
            .filter(|&c| c != b)
            .map(|c| affinity[(b, c)])
            .collect();
        let w = softmax(&others);
        for (c, wc) in (0..l).filter(|&c| c != b).zip(w) {
            coeffs[(b, c)] = wc;
        }
    }
    (coeffs, affinity)
}

/// `g_b = Σ_{c≠b} softmax_c(<u_b, u_c>) u_c`, fused = `Σ_b g_b`.
/// With a single aspect the factor passes through unchanged.
pub fn self_attention_fuse<F: AsRef<[f64]>>(factors: &[F]) -> Result<(Vec<f64>, DenseMatrix)> {
    let d = check_factors(factors)?;
    let (coeffs, affinity) = self_attention_coefficients(factors);
    Ok((self_attention_combine(factors, &coeffs, d), affinity))
}

pub(crate) fn self_attention_combine<F: AsRef<[f64]>>(
    factors: &[F],
    coeffs: &DenseMatrix,
    d: usize,
) -> Vec<f64> {
    let l = factors.len();
    let mut fused = vec![0.0; d];
    for c in 0..l {
        let total: f64 = (0..l).map(|b| coeffs[(b, c)]).sum();
        axpy(total, factors[c].as_ref(), &mut fused);
    }
    fused
}

/// Gradient of the self-attention fused vector with respect to every factor.
pub fn self_attention_backward<F: AsRef<[f64]>>(
    factors: &[F],
    coeffs: &DenseMatrix,
    grad_fused: &[f64],
) -> Vec<Vec<f64>> {
    let l = factors.len();
    let d = grad_fused.len();
    let mut grads = vec![vec![0.0; d]; l];
    if l == 1 {
        grads[0].copy_from_slice(grad_fused);
        return grads;
    }
    let proj: Vec<f64> = factors
        .iter()
        .map(|f| dot(f.as_ref(), grad_fused))
        .collect();
    for b in 0..l {
        // Direct path: fused picks up coeff(b,c) * u_c.
        for c in (0..l).filter(|&c| c != b) {
            axpy(coeffs[(b, c)], grad_fused, &mut grads[c]);
        }
        // Softmax path through the affinities <u_b, u_c>.
        let mean: f64 = (0..l)
            .filter(|&c| c != b)
            .map(|c| coeffs[(b, c)] * proj[c])
            .sum();
        for c in (0..l).filter(|&c| c != b) {
            let g_aff = coeffs[(b, c)] * (proj[c] - mean);
            if g_aff == 0.0 {
                continue;
            }
            axpy(g_aff, factors[c].as_ref(), &mut grads[b]);
            axpy(g_aff, factors[b].as_ref(), &mut grads[c]);
        }
    }
    grads
}
