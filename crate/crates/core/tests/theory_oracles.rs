mod common;

use proptest::prelude::*;
use sparse_bbp::theory::*;

use common::{central_difference, rate_function_grid, semicircle_mass, stieltjes_by_bisection};

#[test]
fn semicircle_integrates_to_one() {
    let mass = semicircle_mass(10_000, semicircle_pdf);
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
}

#[test]
fn cdf_derivative_is_pdf() {
    for k in 0..=390 {
        let x = -1.95 + 0.01 * k as f64;
        let fd = central_difference(semicircle_cdf, x, 1e-4);
        assert!((fd - semicircle_pdf(x)).abs() < 1e-6, "x = {x}: {fd} vs {}", semicircle_pdf(x));
    }
}

#[test]
fn cdf_matches_quadrature_of_pdf() {
    // Partial mass over [−2, x] in the angle variable.
    for &x in &[-1.5, -0.3, 0.0, 0.7, 1.9] {
        let t_end = (x / 2.0f64).asin();
        let t0 = -std::f64::consts::FRAC_PI_2;
        let n = 2000;
        let h = (t_end - t0) / n as f64;
        let g = |t: f64| semicircle_pdf(2.0 * t.sin()) * 2.0 * t.cos();
        let mut s = g(t0) + g(t_end);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * g(t0 + k as f64 * h);
        }
        let integral = s * h / 3.0;
        assert!((integral - semicircle_cdf(x)).abs() < 1e-10, "x = {x}");
    }
}

#[test]
fn stieltjes_self_consistency_on_grid() {
    let points = 10_000;
    for k in 0..points {
        let z = 2.01 + (100.0 - 2.01) * (k as f64 + 0.5) / points as f64;
        let m = stieltjes_m(z).unwrap();
        assert!((m * m + z * m + 1.0).abs() < 1e-12, "z = {z}");
        let neg = stieltjes_m(-z).unwrap();
        assert_eq!(neg, -m);
    }
}

#[test]
fn stieltjes_matches_root_finding() {
    for k in 0..200 {
        let z = 2.001 + 0.25 * k as f64;
        let m = stieltjes_m(z).unwrap();
        assert!((m - stieltjes_by_bisection(z)).abs() < 1e-12, "z = {z}");
        assert!(m > -1.0 && m < 0.0);
    }
}

#[test]
fn m_prime_by_finite_difference() {
    for &z in &[2.2, 3.0, 10.0 / 3.0, 7.5, -3.0] {
        let fd = central_difference(|x| stieltjes_m(x).unwrap(), z, 1e-5);
        assert!((fd - stieltjes_m_prime(z).unwrap()).abs() < 1e-8, "z = {z}");
    }
    assert!((stieltjes_m_prime(10.0 / 3.0).unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn inverse_round_trips() {
    for k in 1..1000 {
        let y = -0.99 * k as f64 / 1000.0;
        let z = stieltjes_m_inverse(y).unwrap();
        assert!((stieltjes_m(z).unwrap() - y).abs() < 1e-10, "y = {y}");
    }
    for k in 0..1000 {
        let z = 2.01 + 0.1 * k as f64;
        let back = stieltjes_m_inverse(stieltjes_m(z).unwrap()).unwrap();
        assert!((back - z).abs() < 1e-10 * z, "z = {z}");
    }
}

#[test]
fn rate_function_matches_grid_search() {
    // Deterministic pseudo-random (λ, α); α ≥ 1/2 keeps the grid
    // discretisation error (≤ g''h²/8) below 3e-5.
    let mut stream = sparse_bbp::derive_stream(17, "rate-oracle", 0);
    use rand::Rng;
    for _ in 0..50 {
        let lambda = stream.random_range(2.05..12.0);
        let alpha = stream.random_range(0.5..8.0);
        let closed = rate_function_lower(lambda, alpha).unwrap();
        let grid = rate_function_grid(lambda, alpha, 1_000_000);
        assert!((closed - grid).abs() < 1e-4, "λ = {lambda}, α = {alpha}: {closed} vs {grid}");
    }
}

#[test]
fn c8_lower_bound_holds_for_alpha_at_least_one() {
    for &alpha in &[1.0, 1.5, 2.0, 5.0, 10.0] {
        let c8 = ldp_constant_c8(alpha).unwrap();
        for k in 1..=100 {
            let eps = k as f64 / 100.0;
            let v = rate_function_lower(2.0 + eps, alpha).unwrap();
            assert!(v >= c8 - 1e-12, "α = {alpha}, ε = {eps}: {v} < {c8}");
        }
    }
}

/// Below α = 1 the closed-form bound at the edge tends to `1 − α/2`, which is
/// smaller than `min{1/(2α), 1} = 1`; the `C8` chain only bounds `I` from
/// below for `α ≥ 1`.
#[test]
fn c8_lower_bound_fails_below_alpha_one() {
    let alpha = 0.5;
    let v = rate_function_lower(2.0 + 1e-3, alpha).unwrap();
    assert!(v < ldp_constant_c8(alpha).unwrap() - 0.05, "{v}");
    let m = stieltjes_m(2.0 + 1e-3).unwrap();
    let edge = (1.0 - alpha / 2.0) / (m * m);
    assert!(v >= edge - 1e-12, "{v} vs {edge}");
}

#[test]
fn c8_piecewise_values() {
    assert_eq!(ldp_constant_c8(0.25).unwrap(), 1.0);
    assert_eq!(ldp_constant_c8(0.5).unwrap(), 1.0);
    assert_eq!(ldp_constant_c8(1.0).unwrap(), 0.5);
    assert_eq!(ldp_constant_c8(4.0).unwrap(), 0.125);
    assert!(ldp_constant_c8(0.0).is_err());
    assert!(ldp_constant_c8(-1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rate_function_positive_past_edge(eps in 1e-6f64..=5.0, alpha in 1e-3f64..=10.0) {
        prop_assert!(rate_function_lower(2.0 + eps, alpha).unwrap() > 0.0);
    }

    #[test]
    fn bbp_eigenvalue_monotone(a in 1e-3f64..20.0, b in 1e-3f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bbp_eigenvalue(lo).unwrap() <= bbp_eigenvalue(hi).unwrap());
        prop_assert!(bbp_overlap(lo).unwrap() <= bbp_overlap(hi).unwrap());
    }

    #[test]
    fn bbp_ranges(theta in 1e-3f64..50.0) {
        let l = bbp_eigenvalue(theta).unwrap();
        let o = bbp_overlap(theta).unwrap();
        prop_assert!(l >= 2.0);
        prop_assert!((0.0..1.0).contains(&o));
        if theta > 1.0 {
            // The outlier sits where m(λ) = −1/θ.
            prop_assert!((stieltjes_m(l).unwrap() + 1.0 / theta).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(semicircle_cdf(lo) <= semicircle_cdf(hi));
    }

    #[test]
    fn inverse_round_trip_prop(y in -0.999f64..-1e-6) {
        let z = stieltjes_m_inverse(y).unwrap();
        prop_assert!((stieltjes_m(z).unwrap() - y).abs() < 1e-10);
    }
}

#[test]
fn bbp_continuous_at_transition() {
    assert_eq!(bbp_eigenvalue(1.0).unwrap(), 2.0);
    assert!((bbp_eigenvalue(1.0 + 1e-9).unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(bbp_overlap(1.0).unwrap(), 0.0);
    assert!(bbp_overlap(1.0 + 1e-9).unwrap() < 1e-8);
}
