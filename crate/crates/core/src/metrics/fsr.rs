use serde::{Deserialize, Serialize};

use super::wasserstein::{data_shift, DataShiftMetric};
use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::scalar::{lit, Scalar};

/// Denominator guard used for every ratio of shifts.
pub const FSR_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsrReport<T> {
    /// Distance between the source and the target training subset.
    pub shift_train: T,
    /// Distance between the source and the full target domain.
    pub shift_full: T,
    pub fsr: T,
    pub epsilon: T,
}

/// Fine-tuning shift ratio with the default marginal Wasserstein distance.
/// Inputs are raw samples; labels play no part.
pub fn fsr<T: Scalar>(
    source: &Matrix<T>,
    target_train: &Matrix<T>,
    target_full: &Matrix<T>,
    epsilon: T,
) -> Result<FsrReport<T>> {
    fsr_with(source, target_train, target_full, epsilon, DataShiftMetric::Marginal)
}

pub fn fsr_with<T: Scalar>(
    source: &Matrix<T>,
    target_train: &Matrix<T>,
    target_full: &Matrix<T>,
    epsilon: T,
    metric: DataShiftMetric,
) -> Result<FsrReport<T>> {
    ensure!(epsilon > T::zero(), "FSR epsilon must be positive");
    let shift_train = data_shift(source, target_train, metric)?;
    let shift_full = data_shift(source, target_full, metric)?;
    Ok(FsrReport {
        shift_train,
        shift_full,
        fsr: shift_train / (shift_full + epsilon),
        epsilon,
    })
}

/// [`fsr`] with the default guard.
pub fn fsr_default<T: Scalar>(
    source: &Matrix<T>,
    target_train: &Matrix<T>,
    target_full: &Matrix<T>,
) -> Result<FsrReport<T>> {
    fsr(source, target_train, target_full, lit(FSR_EPSILON))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::from_fn(v.len(), 1, |r, _| v[r])
    }

    #[test]
    fn train_equal_to_full_gives_near_one() {
        let s = col(&[0.0, 1.0, 2.0]);
        let t = col(&[5.0, 6.0, 8.0]);
        let r = fsr(&s, &t, &t, 1e-8).unwrap();
        assert!((r.fsr - r.shift_full / (r.shift_full + 1e-8)).abs() < 1e-15);
        assert!((r.fsr - 1.0).abs() < 1e-6);
    }

    #[test]
    fn train_equal_to_source_gives_zero() {
        let s = col(&[0.0, 1.0]);
        assert_eq!(fsr(&s, &s, &col(&[3.0, 4.0]), 1e-8).unwrap().fsr, 0.0);
    }

    #[test]
    fn one_dimensional_ratio() {
        let r = fsr(&col(&[0.0, 0.0]), &col(&[2.0, 2.0]), &col(&[1.0, 1.0]), 1e-8).unwrap();
        assert_eq!(r.shift_train, 2.0);
        assert_eq!(r.shift_full, 1.0);
        assert!((r.fsr - 2.0).abs() < 1e-7);
        assert_eq!(r.fsr, r.shift_train / (r.shift_full + r.epsilon));
    }

    #[test]
    fn monotone_in_train_distance() {
        let s = col(&[0.0, 0.0]);
        let full = col(&[1.0, 1.0]);
        let mut last = -1.0;
        for k in 0..10 {
            let t = col(&[k as f64 * 0.3, k as f64 * 0.3]);
            let v = fsr(&s, &t, &full, 1e-8).unwrap().fsr;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn nonpositive_epsilon_rejected() {
        let s = col(&[0.0]);
        assert!(fsr(&s, &s, &s, 0.0).is_err());
    }
}
