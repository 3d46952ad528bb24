//! Closed-form laws of the first hitting time `T_a` of a Brownian motion from 0
//! and of the last time `g` at which a BES(3) process from `r` attains its
//! ultimate minimum.
//!
//! For `g` the density is `p(t) = (1 - exp(-r²/2t)) / (r sqrt(2πt))` and the
//! Laplace transform is `(1 - exp(-sqrt(2λ) r)) / (sqrt(2λ) r)`. Both follow
//! from `g = T_{rU}` in law with `U` uniform on `[0, 1]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{running_infimum, Path};
use crate::stats::{integrate_adaptive, Upper};

/// Absolute tolerance used by every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitLawParams {
    /// Target level. `a = 0` is the degenerate law `T = 0`, whose density
    /// vanishes on `t > 0`.
    pub a: f64,
}

impl HitLawParams {
    pub fn new(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Parameter(format!("level must be finite, got {a}")));
        }
        Ok(HitLawParams { a })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GLawParams {
    r: f64,
}

impl GLawParams {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Parameter(format!("r must be positive and finite, got {r}")));
        }
        Ok(GLawParams { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

fn require_positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

/// `|a| exp(-a²/2t) / sqrt(2π t³)`, extended by its limit 0 at `t = 0`.
pub(crate) fn first_hit_kernel(a: f64, t: f64) -> f64 {
    if t <= 0.0 || a == 0.0 {
        return 0.0;
    }
    a.abs() * (-a * a / (2.0 * t)).exp() / (2.0 * PI * t * t * t).sqrt()
}

/// Density of `T_a`.
pub fn first_hit_density(params: HitLawParams, t: f64) -> Result<f64> {
    require_positive_time(t)?;
    Ok(first_hit_kernel(params.a, t))
}

/// Upper bound on `∫_T^∞` of the `T_a` density.
pub fn first_hit_tail_bound(params: HitLawParams, t: f64) -> f64 {
    2.0 * params.a.abs() / (2.0 * PI * t).sqrt()
}

/// Density of `g`.
pub fn g_density(params: GLawParams, t: f64) -> Result<f64> {
    require_positive_time(t)?;
    let r = params.r;
    Ok(-(-r * r / (2.0 * t)).exp_m1() / (r * (2.0 * PI * t).sqrt()))
}

/// Upper bound on `P(g > T)`: `r / sqrt(2π T)`.
pub fn g_tail_bound(params: GLawParams, t: f64) -> f64 {
    params.r / (2.0 * PI * t).sqrt()
}

/// Integrand of `g_cdf` after `t = w²`; smooth and bounded on `[0, ∞)`.
fn g_cdf_integrand(r: f64, w: f64) -> f64 {
    // At w = 0 the exponent is -inf and exp_m1 gives -1.
    -2.0 * (-r * r / (2.0 * w * w)).exp_m1() / (r * (2.0 * PI).sqrt())
}

/// `P(g <= t)` by adaptive quadrature of the density.
pub fn g_cdf(params: GLawParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(1.0);
    }
    let r = params.r;
    let q = integrate_adaptive(|w| g_cdf_integrand(r, w), 0.0, Upper::Finite(t.sqrt()), QUAD_TOL)?;
    Ok(q.value.clamp(0.0, 1.0))
}

/// `E[exp(-λ g)]`.
pub fn g_laplace(params: GLawParams, lam: f64) -> Result<f64> {
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive and finite, got {lam}")));
    }
    let x = (2.0 * lam).sqrt() * params.r;
    Ok(-(-x).exp_m1() / x)
}

/// `E[exp(-λ g)]` by quadrature of the density, for checking [`g_laplace`].
pub fn g_laplace_numeric(params: GLawParams, lam: f64) -> Result<f64> {
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive and finite, got {lam}")));
    }
    let r = params.r;
    // In w = sqrt(t): 2 e^{-λw²} (1 - e^{-r²/2w²}) / (r sqrt(2π)).
    let f = move |w: f64| (-lam * w * w).exp() * g_cdf_integrand(r, w);
    let tail = move |w: f64| {
        if w <= 0.0 {
            f64::INFINITY
        } else {
            (-lam * w * w).exp() / (lam * w * r * (2.0 * PI).sqrt())
        }
    };
    Ok(integrate_adaptive(f, 0.0, Upper::Infinite { tail_bound: &tail }, QUAD_TOL)?.value)
}

/// `∫_T^∞ e^{-λt} p(t) dt`, the part of the transform beyond a horizon.
pub fn g_laplace_tail(params: GLawParams, lam: f64, horizon: f64) -> Result<f64> {
    require_positive_time(horizon)?;
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lam}")));
    }
    let r = params.r;
    let bound = move |t: f64| (-lam * t).exp() / (lam * r * (2.0 * PI * t).sqrt());
    if bound(horizon) < QUAD_TOL {
        return Ok(0.0);
    }
    let f = move |s: f64| {
        let t = horizon + s;
        (-lam * t).exp() * -(-r * r / (2.0 * t)).exp_m1() / (r * (2.0 * PI * t).sqrt())
    };
    let tail = move |s: f64| bound(horizon + s);
    Ok(integrate_adaptive(f, 0.0, Upper::Infinite { tail_bound: &tail }, QUAD_TOL)?.value)
}

/// CDF of `I_∞`, uniform on `[0, r]`.
pub fn infimum_cdf(params: GLawParams, x: f64) -> f64 {
    (x / params.r).clamp(0.0, 1.0)
}

/// `Z_t = I_t / R_t` at sample `t_index`.
pub fn azema_z(path_r: &Path, t_index: usize) -> Result<f64> {
    let values = path_r.values();
    if t_index >= values.len() {
        return Err(Error::Domain(format!(
            "index {t_index} beyond path of length {}",
            values.len()
        )));
    }
    if let Some(i) = values[..=t_index].iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("nonpositive value {} at index {i}", values[i])));
    }
    let inf = running_infimum(path_r);
    Ok(inf.values()[t_index] / values[t_index])
}

/// `∫_0^1 f_{ru}(t) du`, where `f_a` is the `T_a` density.
///
/// Integrated in `v = r u / sqrt(t)`, the natural width of the integrand,
/// and cut at `v = 40` where the remainder is below `exp(-800)`.
pub fn first_hit_mixture(params: GLawParams, t: f64) -> Result<f64> {
    require_positive_time(t)?;
    let r = params.r;
    let scale = t.sqrt() / r;
    let v_max = (1.0 / scale).min(40.0);
    let q = integrate_adaptive(
        |v| first_hit_kernel(r * v * scale, t) * scale,
        0.0,
        Upper::Finite(v_max),
        QUAD_TOL,
    )?;
    Ok(q.value)
}

/// `|p(t) - ∫_0^1 f_{ru}(t) du|`; zero when `g = T_{rU}` in law.
pub fn mixture_identity_gap(params: GLawParams, t: f64) -> Result<f64> {
    let p = g_density(params, t)?;
    Ok((p - first_hit_mixture(params, t)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::TimeGrid;
    use std::sync::Arc;

    fn g(r: f64) -> GLawParams {
        GLawParams::new(r).unwrap()
    }

    fn hit(a: f64) -> HitLawParams {
        HitLawParams::new(a).unwrap()
    }

    fn path(values: &[f64]) -> Path {
        let grid = Arc::new(TimeGrid::uniform(0.0, 1.0, values.len() - 1).unwrap());
        Path::new(grid, values.to_vec()).unwrap()
    }

    #[test]
    fn first_hit_values() {
        let v = first_hit_density(hit(1.0), 1.0).unwrap();
        assert!((v - (-0.5f64).exp() / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.241971).abs() < 1e-6);
        assert!(first_hit_density(hit(1.0), 1e-4).unwrap() < 1e-300);
        for t in [0.01, 0.3, 1.0, 7.0, 1e4] {
            assert_eq!(first_hit_density(hit(-1.0), t).unwrap(), first_hit_density(hit(1.0), t).unwrap());
        }
        assert!(matches!(first_hit_density(hit(1.0), 0.0), Err(Error::Domain(_))));
        assert!(matches!(first_hit_density(hit(1.0), -1.0), Err(Error::Domain(_))));
        assert_eq!(first_hit_density(hit(0.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn g_density_values() {
        let v = g_density(g(1.0), 1.0).unwrap();
        let closed = (1.0 - (-0.5f64).exp()) / (2.0 * PI).sqrt();
        assert!((v - closed).abs() < 1e-15);
        assert!((v - 0.156977).abs() < 1e-5);
        assert!(matches!(g_density(g(1.0), 0.0), Err(Error::Domain(_))));
        assert!(GLawParams::new(0.0).is_err());
        assert!(GLawParams::new(-1.0).is_err());
    }

    #[test]
    fn g_density_tail_and_scaling() {
        let r: f64 = 1.0;
        let t = 1e6 * r * r;
        let lhs = t * t.sqrt() * g_density(g(r), t).unwrap();
        let rhs = r / (2.0 * (2.0 * PI).sqrt());
        assert!(((lhs - rhs) / rhs).abs() < 1e-3);
        let p2 = g_density(g(2.0), 1.0).unwrap();
        let p1 = g_density(g(1.0), 0.25).unwrap();
        assert!((p2 - p1 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn g_cdf_endpoints() {
        assert_eq!(g_cdf(g(1.0), 0.0).unwrap(), 0.0);
        // Tail bound r / sqrt(2πT) < 1e-7 at T = 1.6e13.
        let t = 1.6e13;
        assert!(g_tail_bound(g(1.0), t) < 1e-7);
        assert!((g_cdf(g(1.0), t).unwrap() - 1.0).abs() < 1e-6);
        assert!(matches!(g_cdf(g(1.0), -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn g_cdf_is_monotone() {
        let mut prev = 0.0;
        for k in -20..40 {
            let t = 10f64.powf(k as f64 / 5.0);
            let c = g_cdf(g(1.3), t).unwrap();
            assert!(c >= prev - 1e-12, "t={t}");
            prev = c;
        }
    }

    #[test]
    fn g_laplace_values() {
        let v = g_laplace(g(1.0), 0.5).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(g_laplace(g(1.0), 1e-9).unwrap() > 1.0 - 1e-4);
        for r in [0.5, 1.0, 3.0] {
            assert!(g_laplace(g(r), 2.0).unwrap() < g_laplace(g(r), 1.0).unwrap());
        }
        assert!(matches!(g_laplace(g(1.0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn numeric_laplace_matches_closed_form() {
        for (r, lam) in [(1.0, 0.5), (1.0, 2.0), (0.3, 1.0), (2.0, 0.1)] {
            let a = g_laplace(g(r), lam).unwrap();
            let b = g_laplace_numeric(g(r), lam).unwrap();
            assert!((a - b).abs() < 1e-8, "r={r} lam={lam}: {a} vs {b}");
        }
        assert!(g_laplace_numeric(g(1.0), 0.0).is_err());
    }

    #[test]
    fn laplace_tail_is_small_and_positive() {
        let tail = g_laplace_tail(g(1.0), 0.01, 50.0).unwrap();
        assert!(tail > 0.0 && tail < 0.05);
        assert_eq!(g_laplace_tail(g(1.0), 0.5, 200.0).unwrap(), 0.0);
    }

    #[test]
    fn infimum_cdf_values() {
        assert_eq!(infimum_cdf(g(2.0), 2.0), 1.0);
        assert_eq!(infimum_cdf(g(2.0), 1.0), 0.5);
        assert_eq!(infimum_cdf(g(2.0), -0.1), 0.0);
        assert_eq!(infimum_cdf(g(2.0), 5.0), 1.0);
    }

    #[test]
    fn azema_hand_cases() {
        assert_eq!(azema_z(&path(&[1.0, 1.3, 0.8]), 0).unwrap(), 1.0);
        assert_eq!(azema_z(&path(&[1.0, 1.3, 0.8]), 2).unwrap(), 1.0);
        assert_eq!(azema_z(&path(&[1.0, 1.3, 0.8, 1.6]), 3).unwrap(), 0.5);
        assert!(matches!(azema_z(&path(&[1.0, -0.1]), 1), Err(Error::Domain(_))));
        assert!(matches!(azema_z(&path(&[1.0, 2.0]), 5), Err(Error::Domain(_))));
    }

    #[test]
    fn mixture_gap_small() {
        assert!(mixture_identity_gap(g(1.0), 1.0).unwrap() < 1e-8);
        assert!(mixture_identity_gap(g(3.0), 0.2).unwrap() < 1e-8);
        assert!(mixture_identity_gap(g(1.0), 1e-6).unwrap() < 1e-8 * g_density(g(1.0), 1e-6).unwrap());
        // Far in the tail both sides underflow.
        assert_eq!(g_density(g(1.0), 1e300).unwrap(), 0.0);
        assert_eq!(mixture_identity_gap(g(1.0), 1e300).unwrap(), 0.0);
    }
}
