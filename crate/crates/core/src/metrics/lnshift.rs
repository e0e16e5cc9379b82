use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::matrix::l2_norm;
use crate::nn::LayerNormParams;
use crate::scalar::Scalar;

/// Per-layer L2 norms of the LayerNorm parameter change and their global sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LnShiftReport<T> {
    pub gamma_shift: Vec<T>,
    pub beta_shift: Vec<T>,
    pub total: T,
}

fn check_layers<T: Scalar>(source: &[LayerNormParams<T>], tuned: &[LayerNormParams<T>]) -> Result<()> {
    ensure!(
        source.len() == tuned.len(),
        "layer count mismatch: {} source vs {} tuned",
        source.len(),
        tuned.len()
    );
    for (i, (s, t)) in source.iter().zip(tuned).enumerate() {
        s.validate()?;
        t.validate()?;
        ensure!(
            s.width() == t.width(),
            "layer {i} width mismatch: {} vs {}",
            s.width(),
            t.width()
        );
    }
    Ok(())
}

/// `Σ_i ‖γ_i^T − γ_i^S‖₂ + ‖β_i^T − β_i^S‖₂` with the per-layer terms.
pub fn ln_shift<T: Scalar>(
    source: &[LayerNormParams<T>],
    tuned: &[LayerNormParams<T>],
) -> Result<LnShiftReport<T>> {
    check_layers(source, tuned)?;
    let diff_norm = |a: &[T], b: &[T]| {
        let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        l2_norm(&d)
    };
    let gamma_shift: Vec<T> = source
        .iter()
        .zip(tuned)
        .map(|(s, t)| diff_norm(&t.gamma, &s.gamma))
        .collect();
    let beta_shift: Vec<T> = source
        .iter()
        .zip(tuned)
        .map(|(s, t)| diff_norm(&t.beta, &s.beta))
        .collect();
    let total = gamma_shift
        .iter()
        .zip(&beta_shift)
        .map(|(&g, &b)| g + b)
        .sum();
    Ok(LnShiftReport {
        gamma_shift,
        beta_shift,
        total,
    })
}
