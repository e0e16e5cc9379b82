use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::scalar::{lit, Scalar};

/// How a multi-dimensional sample is reduced to 1-D transport problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataShiftMetric {
    /// Mean of the per-coordinate marginal distances.
    #[default]
    Marginal,
    /// Mean over seeded random unit directions of the projected distances.
    Sliced { projections: usize, seed: u64 },
}

fn sorted<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Exact Wasserstein-1 distance between two 1-D empirical distributions,
/// `∫ |F_a(t) − F_b(t)| dt`. Sample sizes may differ.
pub fn wasserstein_1d<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    ensure!(!a.is_empty() && !b.is_empty(), "Wasserstein inputs must be nonempty");
    ensure!(
        a.iter().chain(b).all(|v| v.is_finite()),
        "Wasserstein inputs must be finite"
    );
    Ok(sorted_w1(&sorted(a.to_vec()), &sorted(b.to_vec())))
}

fn sorted_w1<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (na, nb) = (a.len(), b.len());
    let wa = T::one() / T::from_usize(na).unwrap();
    let wb = T::one() / T::from_usize(nb).unwrap();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (T::zero(), T::zero());
    let mut total = T::zero();
    let mut prev: Option<T> = None;
    while i < na || j < nb {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (fa - fb).abs() * (t - p);
        }
        while i < na && a[i] == t {
            fa += wa;
            i += 1;
        }
        while j < nb && b[j] == t {
            fb += wb;
            j += 1;
        }
        prev = Some(t);
    }
    total
}

/// Mean over columns of the exact 1-D Wasserstein-1 distance between marginals.
pub fn wasserstein<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    data_shift(a, b, DataShiftMetric::Marginal)
}

pub fn data_shift<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, metric: DataShiftMetric) -> Result<T> {
    ensure!(a.rows() > 0 && b.rows() > 0, "Wasserstein inputs must be nonempty");
    ensure!(a.cols() > 0, "Wasserstein inputs need at least one column");
    ensure!(
        a.cols() == b.cols(),
        "column mismatch: {} vs {}",
        a.cols(),
        b.cols()
    );
    ensure!(a.is_finite() && b.is_finite(), "Wasserstein inputs must be finite");
    match metric {
        DataShiftMetric::Marginal => {
            let total: T = (0..a.cols())
                .map(|d| sorted_w1(&sorted(a.column(d)), &sorted(b.column(d))))
                .sum();
            Ok(total / T::from_usize(a.cols()).unwrap())
        }
        DataShiftMetric::Sliced { projections, seed } => {
            ensure!(projections >= 1, "sliced Wasserstein needs at least one projection");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut total = T::zero();
            for _ in 0..projections {
                let mut dir: Vec<f64> = (0..a.cols()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|v| *v /= norm);
                let dir: Vec<T> = dir.into_iter().map(lit).collect();
                let project = |m: &Matrix<T>| -> Vec<T> {
                    m.iter_rows()
                        .map(|r| r.iter().zip(&dir).map(|(&x, &d)| x * d).sum())
                        .collect()
                };
                total += sorted_w1(&sorted(project(a)), &sorted(project(b)));
            }
            Ok(total / T::from_usize(projections).unwrap())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::from_fn(v.len(), 1, |r, _| v[r])
    }

    /// Minimum-cost perfect matching by enumerating permutations.
    fn brute_force(a: &[f64], b: &[f64]) -> f64 {
        fn permute(k: usize, p: &mut Vec<usize>, a: &[f64], b: &[f64], best: &mut f64) {
            if k == p.len() {
                let cost: f64 = p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum();
                *best = best.min(cost / a.len() as f64);
                return;
            }
            for i in k..p.len() {
                p.swap(k, i);
                permute(k + 1, p, a, b, best);
                p.swap(k, i);
            }
        }
        let mut p: Vec<usize> = (0..a.len()).collect();
        let mut best = f64::INFINITY;
        permute(0, &mut p, a, b, &mut best);
        best
    }

    #[test]
    fn identical_samples_are_zero() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        assert_eq!(wasserstein(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        assert_eq!(wasserstein(&col(&[0.0]), &col(&[1.0])).unwrap(), 1.0);
        assert_eq!(wasserstein(&col(&[0.0, 1.0]), &col(&[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(brute_force(&[0.0, 1.0], &[1.0, 2.0]), 1.0);
    }

    #[test]
    fn unequal_sizes() {
        // Mass 1 at 0 against half at 0, half at 2: CDF gap 1/2 over [0, 2].
        assert!((wasserstein_1d(&[0.0f64], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn column_mismatch_and_empty_rejected() {
        assert!(wasserstein(&Matrix::<f64>::zeros(2, 2), &Matrix::zeros(2, 3)).is_err());
        assert!(wasserstein(&Matrix::<f64>::zeros(0, 2), &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn marginal_average_over_columns() {
        let a = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0, 3.0]]).unwrap();
        assert_eq!(wasserstein(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn sliced_is_deterministic_and_exact_for_translations() {
        let a = Matrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let metric = DataShiftMetric::Sliced { projections: 16, seed: 3 };
        assert_eq!(data_shift(&a, &a, metric).unwrap(), 0.0);
        let b = a.map(|v| v + 1.0);
        let d1 = data_shift(&a, &b, metric).unwrap();
        assert_eq!(d1, data_shift(&a, &b, metric).unwrap());
        assert!(d1 > 0.0 && d1 <= 2f64.sqrt() + 1e-12);
        assert!(data_shift(&a, &b, DataShiftMetric::Sliced { projections: 0, seed: 0 }).is_err());
    }

    #[test]
    fn matches_brute_force_assignment() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let w = wasserstein_1d(&a, &b).unwrap();
            assert!((w - brute_force(&a, &b)).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_permutation_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 1..30),
            b in proptest::collection::vec(-10.0f64..10.0, 1..30),
            rot in 0usize..30,
        ) {
            let ab = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((ab - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-12);
            let mut shuffled = a.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert!((ab - wasserstein_1d(&shuffled, &b).unwrap()).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
        }
    }
}
