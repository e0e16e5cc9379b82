use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::{lit, Scalar};

/// Default LayerNorm epsilon.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Learnable LayerNorm scale `gamma`, bias `beta` and the variance guard `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
}

impl<T: Scalar> LayerNormParams<T> {
    /// Standard initialization: `gamma = 1`, `beta = 0`.
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            eps: lit(DEFAULT_EPS),
        }
    }

    pub fn from_parts(gamma: Vec<T>, beta: Vec<T>, eps: T) -> Result<Self> {
        let p = Self { gamma, beta, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.gamma.len() == self.beta.len(),
            "gamma has width {} but beta has width {}",
            self.gamma.len(),
            self.beta.len()
        );
        ensure!(self.eps > T::zero(), "LayerNorm eps must be positive");
        Ok(())
    }
}

/// Per-vector statistics retained from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormCache<T> {
    /// `(z - mean) / sqrt(var + eps)`
    pub normalized: Vec<T>,
    pub inv_std: T,
}

/// Normalize `z` into `normalized` and return `1/sqrt(var + eps)`, with the
/// population variance.
pub(crate) fn normalize_into<T: Scalar>(z: &[T], eps: T, normalized: &mut [T]) -> T {
    let n = T::from_usize(z.len()).unwrap();
    let mean = z.iter().copied().sum::<T>() / n;
    let var = z.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = T::one() / (var + eps).sqrt();
    for (o, &v) in normalized.iter_mut().zip(z) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}

/// Apply LayerNorm to a single feature vector.
pub fn layernorm_forward<T: Scalar>(z: &[T], p: &LayerNormParams<T>) -> Result<Vec<T>> {
    ensure!(!z.is_empty(), "LayerNorm input must be nonempty");
    ensure!(
        z.len() == p.width(),
        "LayerNorm input width {} does not match parameter width {}",
        z.len(),
        p.width()
    );
    p.validate()?;
    let mut out = vec![T::zero(); z.len()];
    normalize_into(z, p.eps, &mut out);
    for ((o, &g), &b) in out.iter_mut().zip(&p.gamma).zip(&p.beta) {
        *o = *o * g + b;
    }
    Ok(out)
}

/// Given the upstream gradient w.r.t. the normalized vector (already multiplied
/// by gamma), return the gradient w.r.t. the raw input.
pub(crate) fn normalize_backward<T: Scalar>(cache: &NormCache<T>, d_norm: &[T], d_input: &mut [T]) {
    let n = T::from_usize(d_norm.len()).unwrap();
    let mean_d = d_norm.iter().copied().sum::<T>() / n;
    let mean_dn = d_norm
        .iter()
        .zip(&cache.normalized)
        .map(|(&d, &x)| d * x)
        .sum::<T>()
        / n;
    for ((o, &d), &x) in d_input.iter_mut().zip(d_norm).zip(&cache.normalized) {
        *o = cache.inv_std * (d - mean_d - x * mean_dn);
    }
}
