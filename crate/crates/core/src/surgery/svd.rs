//! Thin SVD by one-sided Jacobi rotations.

use crate::matrix::Matrix;
use crate::scalar::{lit, Scalar};

/// `A = U diag(s) Vᵀ` with `s` sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd<T> {
    /// `m × r`
    pub u: Matrix<T>,
    pub s: Vec<T>,
    /// `n × r`
    pub v: Matrix<T>,
}

const MAX_SWEEPS: usize = 100;

impl<T: Scalar> Svd<T> {
    pub fn rank_bound(&self) -> usize {
        self.s.len()
    }

    /// Rebuild `Σ_{i ∈ keep} s_i u_i v_iᵀ`.
    pub fn reconstruct(&self, keep: impl IntoIterator<Item = usize>) -> Matrix<T> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for k in keep {
            let s = self.s[k];
            for i in 0..m {
                let us = self.u.get(i, k) * s;
                if us == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let v = out.get(i, j) + us * self.v.get(j, k);
                    out.set(i, j, v);
                }
            }
        }
        out
    }
}

/// Singular value decomposition of any `m × n` matrix.
pub fn svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    svd_tall(a)
}

/// One-sided Jacobi for `m ≥ n`: rotate column pairs until they are orthogonal.
fn svd_tall<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    // Work on columns: cols[j] is column j of A.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let tol: T = lit::<T>(1e-10).max(T::epsilon() * lit(8.0));

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: T = cols[p].iter().map(|&x| x * x).sum();
                let beta: T = cols[q].iter().map(|&x| x * x).sum();
                let gamma: T = cols[p].iter().zip(&cols[q]).map(|(&x, &y)| x * y).sum();
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (lit::<T>(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(T, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (c.iter().map(|&x| x * x).sum::<T>().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));

    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s.push(sigma);
        if sigma > T::zero() {
            for (i, &x) in cols[j].iter().enumerate() {
                u.set(i, k, x / sigma);
            }
        }
        for (i, &x) in v[j].iter().enumerate() {
            vm.set(i, k, x);
        }
    }
    Svd { u, s, v: vm }
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}
