use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::nn::{accuracy_from_logits, LayerNormParams, ToyModel};
use crate::scalar::{lit, Scalar};

/// Which LayerNorm parameter family a surgery acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamFamily {
    Gamma,
    Beta,
}

impl ParamFamily {
    pub(crate) fn get<T>(self, p: &LayerNormParams<T>) -> &Vec<T> {
        match self {
            ParamFamily::Gamma => &p.gamma,
            ParamFamily::Beta => &p.beta,
        }
    }

    pub(crate) fn get_mut<T>(self, p: &mut LayerNormParams<T>) -> &mut Vec<T> {
        match self {
            ParamFamily::Gamma => &mut p.gamma,
            ParamFamily::Beta => &mut p.beta,
        }
    }
}

pub(crate) fn check_pair<T: Scalar>(
    source: &[LayerNormParams<T>],
    tuned: &[LayerNormParams<T>],
) -> Result<()> {
    ensure!(
        source.len() == tuned.len(),
        "layer count mismatch: {} vs {}",
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

/// `p' = pˢ + λ (pᵀ − pˢ)` for one family; the other family keeps its tuned values.
///
/// Evaluated as `(1 − λ) pˢ + λ pᵀ` so that λ = 0 and λ = 1 reproduce the
/// endpoints bit for bit.
pub fn rescale<T: Scalar>(
    source: &[LayerNormParams<T>],
    tuned: &[LayerNormParams<T>],
    lambda: T,
    family: ParamFamily,
) -> Result<Vec<LayerNormParams<T>>> {
    check_pair(source, tuned)?;
    ensure!(
        lambda >= T::zero() && lambda.is_finite(),
        "lambda must be finite and non-negative, got {lambda}"
    );
    Ok(source
        .iter()
        .zip(tuned)
        .map(|(s, t)| {
            let mut out = t.clone();
            for ((o, &sv), &tv) in family
                .get_mut(&mut out)
                .iter_mut()
                .zip(family.get(s))
                .zip(family.get(t))
            {
                *o = (T::one() - lambda) * sv + lambda * tv;
            }
            out
        })
        .collect())
}

pub fn rescale_gamma<T: Scalar>(
    source: &[LayerNormParams<T>],
    tuned: &[LayerNormParams<T>],
    lambda: T,
) -> Result<Vec<LayerNormParams<T>>> {
    rescale(source, tuned, lambda, ParamFamily::Gamma)
}

pub fn rescale_beta<T: Scalar>(
    source: &[LayerNormParams<T>],
    tuned: &[LayerNormParams<T>],
    lambda: T,
) -> Result<Vec<LayerNormParams<T>>> {
    rescale(source, tuned, lambda, ParamFamily::Beta)
}

/// `count` evenly spaced points over `[lo, hi]`, computed as `lo + i·step`
/// and rounded to 12 decimals so grid labels are exact.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| ((lo + step * i as f64) * 1e12).round() / 1e12)
                .collect()
        }
    }
}

/// The default λ grid: 21 points over `[0, 2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    uniform_grid(0.0, 2.0, 21)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub lambdas: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub best_lambda: f64,
    pub best_accuracy: f64,
}

impl SweepResult {
    /// Accuracy at the grid point equal to 1, if present.
    pub fn accuracy_at(&self, lambda: f64) -> Option<f64> {
        self.lambdas
            .iter()
            .position(|&l| l == lambda)
            .map(|i| self.accuracies[i])
    }

    pub fn is_constant(&self) -> bool {
        self.accuracies.windows(2).all(|w| w[0] == w[1])
    }
}

/// Pick the best grid point: highest accuracy, then the λ closest to 1, then the smaller λ.
pub fn select_best(lambdas: &[f64], accuracies: &[f64]) -> (f64, f64) {
    let mut best = 0;
    for i in 1..lambdas.len() {
        let (a, b) = (accuracies[i], accuracies[best]);
        let closer = (lambdas[i] - 1.0).abs() < (lambdas[best] - 1.0).abs();
        let same_dist = (lambdas[i] - 1.0).abs() == (lambdas[best] - 1.0).abs();
        if a > b || (a == b && (closer || (same_dist && lambdas[i] < lambdas[best]))) {
            best = i;
        }
    }
    (lambdas[best], accuracies[best])
}

/// Evaluate the γ-rescaled tuned model at every λ of the grid.
pub fn lambda_sweep<T: Scalar>(
    source_model: &ToyModel<T>,
    tuned_model: &ToyModel<T>,
    x: &Matrix<T>,
    y: &[usize],
    grid: &[f64],
) -> Result<SweepResult> {
    sweep_family(source_model, tuned_model, x, y, grid, ParamFamily::Gamma)
}

/// [`lambda_sweep`] for either parameter family.
pub fn sweep_family<T: Scalar>(
    source_model: &ToyModel<T>,
    tuned_model: &ToyModel<T>,
    x: &Matrix<T>,
    y: &[usize],
    grid: &[f64],
    family: ParamFamily,
) -> Result<SweepResult> {
    ensure!(!grid.is_empty(), "lambda grid must be nonempty");
    ensure!(
        grid.iter().all(|&l| l >= 0.0 && l.is_finite()),
        "lambda grid values must be finite and non-negative"
    );
    ensure!(x.rows() > 0, "evaluation set must be nonempty");
    ensure!(y.len() == x.rows(), "{} labels for {} rows", y.len(), x.rows());
    tuned_model.validate()?;
    ensure!(
        x.cols() == tuned_model.input_width(),
        "evaluation set has {} columns, model expects {}",
        x.cols(),
        tuned_model.input_width()
    );
    let source_ln = std::slice::from_ref(&source_model.ln);
    let tuned_ln = std::slice::from_ref(&tuned_model.ln);
    check_pair(source_ln, tuned_ln)?;

    // Rescaling touches only LayerNorm, so the body activations are shared.
    let hidden = tuned_model.hidden(x);
    let mut probe = tuned_model.clone();
    let mut accuracies = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut ln = rescale(source_ln, tuned_ln, lit(lambda), family)?;
        probe.ln = ln.pop().expect("one layer");
        accuracies.push(accuracy_from_logits(&probe.logits_from_hidden(&hidden), y));
    }
    let (best_lambda, best_accuracy) = select_best(grid, &accuracies);
    Ok(SweepResult {
        lambdas: grid.to_vec(),
        accuracies,
        best_lambda,
        best_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(g: &[f64], b: &[f64]) -> LayerNormParams<f64> {
        LayerNormParams::from_parts(g.to_vec(), b.to_vec(), 1e-5).unwrap()
    }

    #[test]
    fn identity_and_erasure() {
        let s = vec![layer(&[1.0, 0.5], &[0.0, 0.1])];
        let t = vec![layer(&[1.3, 0.2], &[0.4, -0.2])];
        assert_eq!(rescale_gamma(&s, &t, 1.0).unwrap(), t);
        let zero = rescale_gamma(&s, &t, 0.0).unwrap();
        assert_eq!(zero[0].gamma, s[0].gamma);
        assert_eq!(zero[0].beta, t[0].beta);
        assert_eq!(rescale_beta(&s, &t, 1.0).unwrap(), t);
        let zb = rescale_beta(&s, &t, 0.0).unwrap();
        assert_eq!(zb[0].beta, s[0].beta);
        assert_eq!(zb[0].gamma, t[0].gamma);
    }

    #[test]
    fn hand_values() {
        let g = rescale_gamma(&[layer(&[1.0], &[0.0])], &[layer(&[1.5], &[0.0])], 2.0).unwrap();
        assert_eq!(g[0].gamma, vec![2.0]);
        let b = rescale_beta(&[layer(&[1.0], &[0.0])], &[layer(&[1.0], &[0.4])], 0.5).unwrap();
        assert_eq!(b[0].beta, vec![0.2]);
    }

    #[test]
    fn invalid_inputs() {
        let s = vec![layer(&[1.0], &[0.0])];
        assert!(rescale_gamma(&s, &s, -0.1).is_err());
        assert!(rescale_gamma(&s, &[layer(&[1.0, 2.0], &[0.0, 0.0])], 1.0).is_err());
        assert!(rescale_gamma(&s, &[], 1.0).is_err());
    }

    #[test]
    fn default_grid() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert_eq!(g[20], 2.0);
        assert_eq!(g[3], 0.3);
        assert_eq!(uniform_grid(0.0, 2.0, 11)[1], 0.2);
    }

    #[test]
    fn tie_breaking() {
        let l = default_lambda_grid();
        assert_eq!(select_best(&l, &[0.5; 21]), (1.0, 0.5));
        let mut acc = vec![0.5; 21];
        acc[8] = 0.7;
        acc[12] = 0.7;
        // 0.8 and 1.2 are equally close to 1, the smaller wins.
        assert_eq!(select_best(&l, &acc).0, 0.8);
        acc[0] = 0.9;
        assert_eq!(select_best(&l, &acc), (0.0, 0.9));
    }

    proptest! {
        #[test]
        fn affine_in_lambda(
            s in proptest::collection::vec(-2.0f64..2.0, 1..6),
            d in proptest::collection::vec(-2.0f64..2.0, 1..6),
            a in 0.0f64..2.0, b in 0.0f64..2.0,
        ) {
            let w = s.len().min(d.len());
            let src = vec![layer(&s[..w], &vec![0.0; w])];
            let tun = vec![layer(&s[..w].iter().zip(&d).map(|(x, y)| x + y).collect::<Vec<_>>(), &vec![0.0; w])];
            let ra = rescale_gamma(&src, &tun, a).unwrap();
            let rb = rescale_gamma(&src, &tun, b).unwrap();
            let rm = rescale_gamma(&src, &tun, (a + b) / 2.0).unwrap();
            for i in 0..w {
                let mid = 0.5 * (ra[0].gamma[i] + rb[0].gamma[i]);
                prop_assert!((rm[0].gamma[i] - mid).abs() < 1e-12);
            }
        }
    }
}
