//! Independent oracles shared by the integration tests. None of these call
//! the closed forms they are used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `∫ f_sc` over `[−2, 2]` by composite Simpson in `x = 2 sin t`, which
/// removes the square-root endpoint singularity. `intervals` must be even.
pub fn semicircle_mass(intervals: usize, pdf: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (-PI / 2.0, PI / 2.0);
    let h = (b - a) / intervals as f64;
    let g = |t: f64| pdf(2.0 * t.sin()) * 2.0 * t.cos();
    let mut s = g(a) + g(b);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(a + k as f64 * h);
    }
    s * h / 3.0
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `m(z)` as the root of `m² + zm + 1 = 0` in `(−1, 0)` for `z > 2`, found by
/// bisection on the quadratic.
pub fn stieltjes_by_bisection(z: f64) -> f64 {
    let f = |m: f64| m * m + z * m + 1.0;
    // f(−1) = 2 − z < 0, f(0) = 1 > 0.
    let (mut lo, mut hi) = (-1.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `min_{s ∈ [1, 10⁴]} (λ + m s)²/(2α) + s − 1` over a uniform grid of
/// `points` values, with `m` taken from the bisection oracle.
pub fn rate_function_grid(lambda: f64, alpha: f64, points: usize) -> f64 {
    let m = stieltjes_by_bisection(lambda);
    let (lo, hi) = (1.0f64, 1e4f64);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = f64::INFINITY;
    for k in 0..points {
        let s = lo + k as f64 * step;
        let v = (lambda + m * s).powi(2) / (2.0 * alpha) + s - 1.0;
        best = best.min(v);
    }
    best
}

/// Eigenvalues of a small symmetric matrix (row-major, full storage) by
/// bisection on Sylvester inertia counts of `A − xI` via LDLᵀ without
/// pivoting. Ascending. Intended for n ≲ 300.
pub fn eigenvalues_by_inertia(a: &[f64], n: usize) -> Vec<f64> {
    let bound = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        + 1.0;
    let count_below = |x: f64| -> usize {
        // Gaussian elimination on A − xI; the number of negative pivots is
        // the number of eigenvalues below x (Sylvester).
        let mut m: Vec<f64> = a.to_vec();
        for i in 0..n {
            m[i * n + i] -= x;
        }
        let mut neg = 0;
        for k in 0..n {
            let mut piv = m[k * n + k];
            if piv == 0.0 {
                piv = -1e-300;
            }
            if piv < 0.0 {
                neg += 1;
            }
            for i in k + 1..n {
                let f = m[i * n + k] / piv;
                if f != 0.0 {
                    for j in k + 1..n {
                        m[i * n + j] -= f * m[k * n + j];
                    }
                }
            }
        }
        neg
    };
    (0..n)
        .map(|idx| {
            // Asymmetric bracket so no midpoint lands exactly on a zero eigenvalue
            // of an empty row.
            let (mut lo, mut hi) = (-bound, 1.013_7 * bound);
            for _ in 0..70 {
                let mid = 0.5 * (lo + hi);
                if count_below(mid) > idx {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// `q = (log n)²/n`, the sparse-noise scale used throughout the campaigns.
pub fn log2_over_n(n: usize) -> f64 {
    let l = (n as f64).ln();
    l * l / n as f64
}

/// Every observed value of `quantity`, whatever its indices, in row order.
pub fn all_observed(res: &sparse_bbp::CampaignResult, quantity: &str) -> Vec<f64> {
    res.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.observed).collect()
}
