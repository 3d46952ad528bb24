//! Closed-form laws against independent oracles, and their scaling properties.

use std::f64::consts::PI;

use proptest::prelude::*;
use wlab::analytic::{self, GLawParams, HitLawParams};

fn g(r: f64) -> GLawParams {
    GLawParams::new(r).unwrap()
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `P(g <= t)` in closed form: with `x = r / sqrt(t)`,
/// `2 Φ̄(x) + 2 (φ(0) - φ(x)) / x`.
fn g_cdf_oracle(r: f64, t: f64) -> f64 {
    let x = r / t.sqrt();
    2.0 * normal_sf(x) + 2.0 * (phi(0.0) - phi(x)) / x
}

#[test]
fn g_cdf_matches_closed_form() {
    for r in [0.3, 1.0, 2.5] {
        for t in [1e-3, 0.1, 0.5, 1.0, 4.0, 30.0, 1e3, 1e5] {
            let got = analytic::g_cdf(g(r), t).unwrap();
            let want = g_cdf_oracle(r, t);
            assert!((got - want).abs() < 1e-9, "r={r} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn g_density_is_derivative_of_oracle_cdf() {
    for (r, t) in [(1.0, 0.7), (0.5, 3.0), (2.0, 0.2)] {
        let h = 1e-5 * t;
        let fd = (g_cdf_oracle(r, t + h) - g_cdf_oracle(r, t - h)) / (2.0 * h);
        let p = analytic::g_density(g(r), t).unwrap();
        assert!((fd - p).abs() < 1e-7 * p.max(1.0), "r={r} t={t}: {fd} vs {p}");
    }
}

#[test]
fn first_hit_density_is_levy() {
    // Lévy law: P(T_a <= t) = 2 Φ̄(a / sqrt(t)); check its derivative.
    for (a, t) in [(1.0, 1.0), (0.4, 0.05), (3.0, 20.0)] {
        let h = 1e-5 * t;
        let cdf = |s: f64| 2.0 * normal_sf(a / s.sqrt());
        let fd = (cdf(t + h) - cdf(t - h)) / (2.0 * h);
        let f = analytic::first_hit_density(HitLawParams::new(a).unwrap(), t).unwrap();
        assert!((fd - f).abs() < 1e-7 * f.max(1.0), "a={a} t={t}: {fd} vs {f}");
    }
}

#[test]
fn laplace_at_r1_lambda_half() {
    // sqrt(2 * 0.5) * 1 = 1, so the transform is 1 - 1/e.
    let v = analytic::g_laplace(g(1.0), 0.5).unwrap();
    assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
}

#[test]
fn laplace_tail_matches_numeric_difference() {
    let (r, lam, horizon) = (1.0, 0.5, 20.0);
    let full = analytic::g_laplace_numeric(g(r), lam).unwrap();
    let tail = analytic::g_laplace_tail(g(r), lam, horizon).unwrap();
    // ∫_0^H e^{-λt} p(t) dt by Simpson in w = sqrt(t).
    let n = 200_000;
    let wmax = horizon.sqrt();
    let h = wmax / n as f64;
    let f = |w: f64| {
        if w == 0.0 {
            2.0 / (r * (2.0 * PI).sqrt())
        } else {
            2.0 * w * (-lam * w * w).exp() * analytic::g_density(g(r), w * w).unwrap()
        }
    };
    let mut s = f(0.0) + f(wmax);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let head = s * h / 3.0;
    assert!((full - tail - head).abs() < 1e-9, "{full} - {tail} vs {head}");
}

#[test]
fn domain_errors() {
    assert!(GLawParams::new(0.0).is_err());
    assert!(HitLawParams::new(f64::NAN).is_err());
    assert!(analytic::g_density(g(1.0), 0.0).is_err());
    assert!(analytic::g_laplace(g(1.0), -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brownian_scaling_of_g(r in 0.05f64..20.0, t in 1e-3f64..1e3) {
        // g under r is r^2 times g under 1.
        let s = r * r;
        let p = analytic::g_density(g(r), t).unwrap();
        let p1 = analytic::g_density(g(1.0), t / s).unwrap() / s;
        prop_assert!((p - p1).abs() <= 1e-12 * p.abs().max(1e-300));
        let f = analytic::g_cdf(g(r), t).unwrap();
        let f1 = analytic::g_cdf(g(1.0), t / s).unwrap();
        prop_assert!((f - f1).abs() < 1e-9);
    }

    #[test]
    fn g_cdf_is_monotone_in_t_and_decreasing_in_r(r in 0.1f64..5.0, t in 1e-2f64..1e2, k in 1.01f64..3.0) {
        let a = analytic::g_cdf(g(r), t).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(analytic::g_cdf(g(r), t * k).unwrap() >= a - 1e-12);
        prop_assert!(analytic::g_cdf(g(r * k), t).unwrap() <= a + 1e-12);
    }

    #[test]
    fn laplace_lies_in_unit_interval_and_decreases(r in 0.05f64..10.0, lam in 1e-3f64..50.0, k in 1.01f64..4.0) {
        let a = analytic::g_laplace(g(r), lam).unwrap();
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(analytic::g_laplace(g(r), lam * k).unwrap() < a);
    }

    #[test]
    fn mixture_gap_is_tiny(r in 0.1f64..5.0, t in 1e-2f64..1e3) {
        prop_assert!(analytic::mixture_identity_gap(g(r), t).unwrap() < 1e-8);
    }

    #[test]
    fn infimum_cdf_is_uniform(r in 0.1f64..5.0, x in -1.0f64..6.0) {
        let want = (x / r).clamp(0.0, 1.0);
        prop_assert_eq!(analytic::infimum_cdf(g(r), x), want);
    }
}
