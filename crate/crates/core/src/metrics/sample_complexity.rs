//! Sample sizes needed to pin down a mean or a variance to a given confidence.
//!
//! The quantiles come from the regularized incomplete gamma function:
//! `erf(x) = P(1/2, x²)` and the chi-squared CDF is `P(k/2, x/2)`.

use crate::error::{ensure, Result};

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete gamma pair `(P(a, x), Q(a, x))`.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // Series.
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = (sum.ln() + log_prefix).exp();
        (p, 1.0 - p)
    } else {
        // Continued fraction, modified Lentz.
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (log_prefix + h.ln()).exp();
        (1.0 - q, q)
    }
}

/// Solve `f(x) = target` for increasing `f` on `[lo, hi]` by bisection.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64, target: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal quantile needs p in (0, 1)");
    if p < 0.5 {
        return -normal_quantile(1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    // Upper tail: 1 - Φ(x) = Q(1/2, x²/2) / 2, decreasing in x.
    let tail = 1.0 - p;
    let neg_tail = |x: f64| -0.5 * regularized_gamma(0.5, 0.5 * x * x).1;
    bisect(0.0, 40.0, neg_tail, -tail)
}

/// Chi-squared quantile with `dof` degrees of freedom.
pub fn chi_squared_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "chi-squared quantile needs p in (0, 1)");
    assert!(dof > 0.0, "degrees of freedom must be positive");
    let a = 0.5 * dof;
    let mut hi = dof.max(1.0);
    while regularized_gamma(a, 0.5 * hi).0 < p {
        hi *= 2.0;
    }
    if p <= 0.5 {
        bisect(0.0, hi, |x| regularized_gamma(a, 0.5 * x).0, p)
    } else {
        bisect(0.0, hi, |x| -regularized_gamma(a, 0.5 * x).1, -(1.0 - p))
    }
}

/// Smallest `n` with `2 z_{α/2} σ / √n ≤ ε`, i.e. `ceil((2 z σ / ε)²)`.
pub fn mean_sample_size(sigma: f64, epsilon_width: f64, alpha: f64) -> Result<u64> {
    Ok(mean_sample_bound(sigma, epsilon_width, alpha)?.ceil() as u64)
}

/// The bound of [`mean_sample_size`] before rounding up.
pub fn mean_sample_bound(sigma: f64, epsilon_width: f64, alpha: f64) -> Result<f64> {
    ensure!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive, got {sigma}");
    ensure!(
        epsilon_width > 0.0 && epsilon_width.is_finite(),
        "interval width must be positive, got {epsilon_width}"
    );
    ensure!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1), got {alpha}");
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok((2.0 * z * sigma / epsilon_width).powi(2))
}

/// `(1 − α)` confidence interval for a Gaussian variance from a sample variance.
pub fn variance_ci(sample_var: f64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    ensure!(
        sample_var > 0.0 && sample_var.is_finite(),
        "sample variance must be positive, got {sample_var}"
    );
    ensure!(n >= 2, "need at least two samples, got {n}");
    ensure!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1), got {alpha}");
    let dof = (n - 1) as f64;
    let scaled = dof * sample_var;
    let upper_q = chi_squared_quantile(1.0 - alpha / 2.0, dof);
    let lower_q = chi_squared_quantile(alpha / 2.0, dof);
    Ok((scaled / upper_q, scaled / lower_q))
}
